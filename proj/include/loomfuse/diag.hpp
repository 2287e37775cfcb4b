#ifndef LOOMFUSE_DIAG_HPP
#define LOOMFUSE_DIAG_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace loomfuse {

struct SourceLoc {
  std::string file;
  int line = 0;  // 1-based; 0 = unknown
  int column = 0;

  std::string str() const {
    std::string s = file.empty() ? std::string("<input>") : file;
    if (line > 0) {
      s += ":" + std::to_string(line);
      if (column > 0) s += ":" + std::to_string(column);
    }
    return s;
  }
};

enum class Severity { error, warning };

struct Diagnostic {
  Severity severity = Severity::error;
  SourceLoc loc;
  std::string message;

  std::string str() const {
    return loc.str() + ": " + (severity == Severity::error ? "error: " : "warning: ") + message;
  }
};

class DiagList {
public:
  void error(SourceLoc loc, std::string msg) {
    items_.push_back({Severity::error, std::move(loc), std::move(msg)});
  }
  void warning(SourceLoc loc, std::string msg) {
    items_.push_back({Severity::warning, std::move(loc), std::move(msg)});
  }
  bool has_errors() const {
    for (const auto& d : items_)
      if (d.severity == Severity::error) return true;
    return false;
  }
  bool empty() const { return items_.empty(); }
  size_t size() const { return items_.size(); }
  const std::vector<Diagnostic>& items() const { return items_; }
  std::string str() const {
    std::string s;
    for (const auto& d : items_) {
      s += d.str();
      s += '\n';
    }
    return s;
  }

private:
  std::vector<Diagnostic> items_;
};

// Contract violations inside the pipeline. User-facing problems go through
// DiagList instead.
struct internal_error : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace loomfuse

#endif

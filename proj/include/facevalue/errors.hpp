#pragma once

#include <stdexcept>
#include <string>

namespace facevalue {

/// Raised when a caller breaks an operation's precondition (bad index,
/// unavailable action, mismatched dimensions).
class contract_error : public std::logic_error {
 public:
  explicit contract_error(const std::string& what) : std::logic_error(what) {}
};

/// A landmark frame whose bounding box has zero extent on some axis.
class degenerate_frame_error : public std::runtime_error {
 public:
  explicit degenerate_frame_error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed config file, CSV or wire message.
class parse_error : public std::runtime_error {
 public:
  explicit parse_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace facevalue

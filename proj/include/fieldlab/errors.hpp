#pragma once

#include <stdexcept>
#include <string>

namespace fieldlab {

enum class ErrorKind {
  SyntaxError,
  UnknownCoordinate,
  MissingCoordinate,
  DomainError,
  DegreeMismatch,
  LayerMismatch,
  NotClosed,
  SingularSystem,
  InvalidCokernel,
  Inconclusive,
  GridTooCoarse,
  NonFiniteState,
  Unavailable,
  BadInput,
  SampleMismatch,
  NotProjectable,
  PointOffConstraint,
  NoCokernelRegistered,
  DegenerateStructure,
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::SyntaxError: return "SyntaxError";
    case ErrorKind::UnknownCoordinate: return "UnknownCoordinate";
    case ErrorKind::MissingCoordinate: return "MissingCoordinate";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::DegreeMismatch: return "DegreeMismatch";
    case ErrorKind::LayerMismatch: return "LayerMismatch";
    case ErrorKind::NotClosed: return "NotClosed";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::InvalidCokernel: return "InvalidCokernel";
    case ErrorKind::Inconclusive: return "Inconclusive";
    case ErrorKind::GridTooCoarse: return "GridTooCoarse";
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::Unavailable: return "Unavailable";
    case ErrorKind::BadInput: return "BadInput";
    case ErrorKind::SampleMismatch: return "SampleMismatch";
    case ErrorKind::NotProjectable: return "NotProjectable";
    case ErrorKind::PointOffConstraint: return "PointOffConstraint";
    case ErrorKind::NoCokernelRegistered: return "NoCokernelRegistered";
    case ErrorKind::DegenerateStructure: return "DegenerateStructure";
  }
  return "Error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + msg),
        kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

}  // namespace fieldlab

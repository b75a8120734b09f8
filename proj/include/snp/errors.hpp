#pragma once

#include <stdexcept>
#include <string>

namespace snp {

// Error taxonomy. Every failure the library raises derives from Error so
// callers can catch one base; the concrete type tells them what went wrong.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dimension or layout mismatch between tensors / layers.
class ShapeError : public Error {
  public:
    using Error::Error;
};

// Non-finite values or otherwise unusable numeric content.
class DataError : public Error {
  public:
    using Error::Error;
};

// Caller violated a documented precondition (bad permutation, keep out of
// range, spec/layer mismatch, ...).
class ContractError : public Error {
  public:
    using Error::Error;
};

// Numerical failure: not-PSD Gram, eigensolver did not converge, singular
// system beyond the ridge.
class NumericError : public Error {
  public:
    using Error::Error;
};

// Malformed input file (IDX, CSV, manifest); message carries byte/line
// position where known.
class ParseError : public Error {
  public:
    using Error::Error;
};

// Filesystem-level failure (unreadable, unwritable, truncated).
class IoError : public Error {
  public:
    using Error::Error;
};

}  // namespace snp

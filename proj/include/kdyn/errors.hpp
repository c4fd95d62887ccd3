#pragma once

#include <stdexcept>
#include <string>

namespace kdyn {

// Error taxonomy maps onto CLI exit codes: ConfigError -> 2, DataError -> 3,
// NumericError -> 4. ShapeError is a caller-side contract violation.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

struct ShapeError : Error {
  using Error::Error;
};

}  // namespace kdyn

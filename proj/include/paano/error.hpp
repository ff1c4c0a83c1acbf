#pragma once

#include <stdexcept>
#include <string>

namespace paano {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (CSV content, labels, lengths).
class DataError : public Error {
public:
    using Error::Error;
};

// Tensor or model shape mismatch.
class ShapeError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace paano

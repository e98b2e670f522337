#ifndef SPECREG_ERROR_HPP
#define SPECREG_ERROR_HPP

#include <stdexcept>
#include <string>

namespace specreg {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand shapes do not line up.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Input exceeds the size a desk-scale routine accepts.
class SizeLimitError : public Error {
public:
    using Error::Error;
};

// A precondition on a value (range, finiteness, normalization) was violated.
class ValueError : public Error {
public:
    using Error::Error;
};

} // namespace specreg

#endif // SPECREG_ERROR_HPP

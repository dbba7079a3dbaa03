#pragma once

#include <stdexcept>
#include <string>

namespace cmcc {

// Tensor or kernel dimensions do not agree with what an operation needs.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A serialized artifact (CMW1 weights, PPM, CSV) is malformed.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input data is unusable: missing labels, fully masked frames, empty sets.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite values showed up where finite ones are required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace cmcc

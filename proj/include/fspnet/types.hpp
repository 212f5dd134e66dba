#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace fspnet {

/// Common dense type aliases used throughout the library.
template <typename FloatType>
struct DenseTypes {
    using Scalar = FloatType;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using RowMatrix =
        Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
};

using Real = double;
using MatrixX = DenseTypes<Real>::Matrix;
using RowMatrixX = DenseTypes<Real>::RowMatrix;
using VectorX = DenseTypes<Real>::Vector;
using ArrayX = DenseTypes<Real>::Array;
using Vector5 = Eigen::Matrix<Real, 5, 1>;

using MapRowMatrix = Eigen::Map<RowMatrixX>;
using ConstMapRowMatrix = Eigen::Map<const RowMatrixX>;

/// Violated precondition or API contract. Indicates a caller bug, not an
/// environmental failure.
class ContractViolation : public std::logic_error {
public:
    explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

/// Runtime failure (I/O, numerical breakdown with context attached).
class RuntimeFailure : public std::runtime_error {
public:
    explicit RuntimeFailure(const std::string& what) : std::runtime_error(what) {}
};

/// Structured error for the binary file formats.
class FileFormatError : public RuntimeFailure {
public:
    enum class Kind { bad_magic, version_mismatch, truncated, io };
    FileFormatError(Kind kind, const std::string& what)
        : RuntimeFailure(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

#define FSPNET_REQUIRE(cond, msg) \
    do {                          \
        if (!(cond)) throw ::fspnet::ContractViolation(msg); \
    } while (0)

}  // namespace fspnet

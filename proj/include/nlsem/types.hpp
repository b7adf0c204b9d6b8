#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace nlsem {

/// State and noise dimensions are small; vectors and matrices live on the stack.
inline constexpr int kMaxDim = 4;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A time that is not a knot of the grid it is used with.
class GridAlignmentError : public Error {
public:
    using Error::Error;
};

/// Two paths that do not share a grid or dimension.
class GridMismatchError : public Error {
public:
    using Error::Error;
};

/// Non-finite state or invalid control during simulation.
class SimulationError : public Error {
public:
    using Error::Error;
};

/// Work requested exceeds a configured cap.
class BudgetError : public Error {
public:
    using Error::Error;
};

class CflError : public Error {
public:
    CflError(const std::string& what, std::size_t required_steps)
        : Error(what), required_steps_(required_steps) {}
    std::size_t required_steps() const noexcept { return required_steps_; }

private:
    std::size_t required_steps_;
};

/// Scenario configuration does not match the schema.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace nlsem

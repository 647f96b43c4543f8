#pragma once

#include <stdexcept>
#include <string>

namespace spulse {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Input to an anti-derivative (or anything built on one) had a non-negligible mean.
class MeanNotZero : public Error {
public:
    MeanNotZero(std::string which, double mean_ratio)
        : Error("mean not zero in " + which + " (|f^(0)|/|f| = " + std::to_string(mean_ratio) + ")"),
          which_(std::move(which)), ratio_(mean_ratio) {}
    const std::string& which() const noexcept { return which_; }
    double ratio() const noexcept { return ratio_; }

private:
    std::string which_;
    double ratio_;
};

class GridMismatch : public Error {
public:
    using Error::Error;
};

class StepUnstable : public Error {
public:
    StepUnstable(double tau, double growth)
        : Error("short-pulse step unstable at tau=" + std::to_string(tau) +
                " (norm growth " + std::to_string(growth) + ")"),
          tau_(tau) {}
    double tau() const noexcept { return tau_; }

private:
    double tau_;
};

class ValidityRegionExceeded : public Error {
public:
    ValidityRegionExceeded(double t, std::string reason)
        : Error("Klein-Gordon validity region exceeded at t=" + std::to_string(t) + ": " + reason),
          t_(t), reason_(std::move(reason)) {}
    double time() const noexcept { return t_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    double t_;
    std::string reason_;
};

class QuadratureUnderResolved : public Error {
public:
    using Error::Error;
};

class BoundaryLeak : public Error {
public:
    using Error::Error;
};

class SyncError : public Error {
public:
    using Error::Error;
};

class Bound7Violated : public Error {
public:
    using Error::Error;
};

class FitFailed : public Error {
public:
    using Error::Error;
};

class ConfigInvalid : public Error {
public:
    ConfigInvalid(std::string key, const std::string& reason)
        : Error("invalid config key '" + key + "': " + reason), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace spulse

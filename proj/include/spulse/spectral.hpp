#pragma once

// Periodic Fourier discretization: grids, fields and the spectral operators
// built on them (derivatives, zero-mean anti-derivatives, Sobolev norms, the
// linear short-pulse semigroup and exact translations).
//
// Spectral coefficients are stored as the real-to-complex half spectrum
// c_m = (1/n) sum_j f_j exp(-i k_m xi_j), m = 0..n/2, with k_m = 2 pi m / L.
// Norms use the continuum normalization ||f||^2_{L2} = L sum_{all m} |c_m|^2,
// so they are stable under grid refinement.

#include <complex>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace spulse {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kDefaultMeanTol = 1e-8;

class FourierGrid {
public:
    FourierGrid(double length, std::size_t n);
    ~FourierGrid();
    FourierGrid(const FourierGrid&) = delete;
    FourierGrid& operator=(const FourierGrid&) = delete;

    double length() const noexcept { return length_; }
    std::size_t size() const noexcept { return n_; }
    std::size_t spectrum_size() const noexcept { return n_ / 2 + 1; }
    double spacing() const noexcept { return length_ / static_cast<double>(n_); }
    double node(std::size_t j) const noexcept { return spacing() * static_cast<double>(j); }
    std::vector<double> nodes() const;

    /// k_m for the stored half spectrum, m = 0..n/2.
    std::span<const double> wavenumbers() const noexcept { return k_; }
    /// Integer mode numbers m = -n/2+1 .. n/2 of the full spectrum, in that order.
    std::vector<int> mode_numbers() const;
    double k_max() const noexcept { return k_.back(); }
    /// Largest mode number kept by the 2/3-rule truncation.
    std::size_t dealias_cutoff() const noexcept { return n_ / 3; }

    /// Forward transform, normalized by 1/n.
    void forward(std::span<const double> values, std::span<cplx> spec) const;
    /// Inverse of forward(). The input spectrum is left untouched.
    void inverse(std::span<const cplx> spec, std::span<double> values) const;

    bool same_as(const FourierGrid& other) const noexcept {
        return this == &other || (n_ == other.n_ && length_ == other.length_);
    }

private:
    double length_;
    std::size_t n_;
    std::vector<double> k_;
    void* plan_r2c_ = nullptr;
    void* plan_c2r_ = nullptr;
};

using Grid = std::shared_ptr<const FourierGrid>;

/// Validates (length > 0, n even, n >= 8) and builds a shareable grid.
Grid make_grid(double length, std::size_t n);

class Spectrum;

/// Real grid function on a FourierGrid. A plain value: operations return new fields.
class Field {
public:
    explicit Field(Grid grid);
    Field(Grid grid, std::vector<double> values);

    template <typename F>
    static Field sample(Grid grid, F&& f) {
        std::vector<double> v(grid->size());
        for (std::size_t j = 0; j < v.size(); ++j) v[j] = f(grid->node(j));
        return Field(std::move(grid), std::move(v));
    }

    const Grid& grid() const noexcept { return grid_; }
    std::size_t size() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }
    double operator[](std::size_t j) const noexcept { return values_[j]; }
    double& operator[](std::size_t j) noexcept { return values_[j]; }

    bool all_finite() const noexcept;

    Field& operator+=(const Field& o);
    Field& operator-=(const Field& o);
    Field& operator*=(double a);
    /// this += a * o
    Field& add_scaled(double a, const Field& o);

private:
    Grid grid_;
    std::vector<double> values_;
};

Field operator+(Field a, const Field& b);
Field operator-(Field a, const Field& b);
Field operator*(double a, Field f);
Field operator*(Field f, double a);
Field operator-(Field f);

class Spectrum {
public:
    explicit Spectrum(Grid grid);
    Spectrum(Grid grid, std::vector<cplx> coeffs);

    const Grid& grid() const noexcept { return grid_; }
    std::span<const cplx> coeffs() const noexcept { return c_; }
    std::span<cplx> coeffs() noexcept { return c_; }
    cplx operator[](std::size_t m) const noexcept { return c_[m]; }
    cplx& operator[](std::size_t m) noexcept { return c_[m]; }

private:
    Grid grid_;
    std::vector<cplx> c_;
};

Spectrum to_spectrum(const Field& f);
Field to_field(const Spectrum& s);

/// Spectral derivative: coefficients times (ik)^order.
Field differentiate(const Field& f, int order = 1);

/// Zero-mean primitive of the given order. Throws MeanNotZero when the mean of f
/// is not negligible: |mean| sqrt(L) > mean_tol ||f||_{L2}.
Field antiderivative(const Field& f, int order = 1, double mean_tol = kDefaultMeanTol);

/// H^s norm, s >= 0; s = 0 is the L2 norm.
double sobolev_norm(const Field& f, double s);

/// Homogeneous negative norm (sum_{k != 0} k^{-2m} |f^(k)|^2)^{1/2}.
double homogeneous_negative_norm(const Field& f, int m, double mean_tol = kDefaultMeanTol);

/// S(tau) = exp(tau d^{-1}): multiplies c_m by exp(-i tau / k_m) for k_m != 0.
Field semigroup_apply(const Field& f, double tau, double mean_tol = kDefaultMeanTol);

/// f(. - shift), exact for band-limited data.
Field translate(const Field& f, double shift);

double mean(const Field& f);
Field remove_mean(const Field& f);
/// |mean| sqrt(L) / ||f||_{L2}; zero for the zero field.
double mean_ratio(const Field& f);
void require_zero_mean(const Field& f, const char* what, double mean_tol = kDefaultMeanTol);

/// 2/3-rule truncation: zero every mode above n/3.
Field dealias(const Field& f);
/// Product evaluated on a zero-padded grid large enough to be alias-free, then
/// truncated back to the modes of the original grid (Nyquist dropped).
Field product(const Field& a, const Field& b);
/// f^p, zero-padded the same way (padding grows with p).
Field power(const Field& f, int p);

/// Values of f on a grid `factor` times finer, by zero-padding the spectrum (the
/// Nyquist mode is dropped). Products of up to 2 * factor such arrays integrate exactly.
std::vector<double> refine(const Field& f, std::size_t factor);

/// Trapezoidal integral over one period (spectrally exact for band-limited data).
double integrate(const Field& f);
double inner(const Field& a, const Field& b);
double linf_norm(const Field& f);
double l2_norm(const Field& f);

/// Throws GridMismatch unless both fields live on the same grid.
void require_same_grid(const Field& a, const Field& b, const char* what);

}  // namespace spulse

#include "spulse/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "spulse/errors.hpp"
#include "spulse/kernels.hpp"

namespace spulse {

namespace {

// The FFTW planner is not thread-safe; execution with the new-array interface is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

fftw_complex* as_fftw(cplx* p) { return reinterpret_cast<fftw_complex*>(p); }

// Multiplicity of half-spectrum mode m in the full spectrum.
double multiplicity(std::size_t m, std::size_t n) { return (m == 0 || 2 * m == n) ? 1.0 : 2.0; }

bool is_nyquist(std::size_t m, std::size_t n) { return 2 * m == n; }

cplx ik_pow(double k, int order) {
    cplx r{1.0, 0.0};
    const cplx ik{0.0, k};
    for (int i = 0; i < order; ++i) r *= ik;
    return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// FourierGrid

FourierGrid::FourierGrid(double length, std::size_t n) : length_(length), n_(n), k_(n / 2 + 1) {
    for (std::size_t m = 0; m < k_.size(); ++m) k_[m] = 2.0 * kPi * static_cast<double>(m) / length_;

    std::vector<double> in(n_);
    std::vector<cplx> out(spectrum_size());
    const int ni = static_cast<int>(n_);
    std::lock_guard lock(planner_mutex());
    plan_r2c_ = fftw_plan_dft_r2c_1d(ni, in.data(), as_fftw(out.data()), FFTW_ESTIMATE | FFTW_UNALIGNED);
    plan_c2r_ = fftw_plan_dft_c2r_1d(ni, as_fftw(out.data()), in.data(),
                                     FFTW_ESTIMATE | FFTW_UNALIGNED | FFTW_PRESERVE_INPUT);
    if (plan_r2c_ == nullptr || plan_c2r_ == nullptr) throw Error("FFTW planning failed");
}

FourierGrid::~FourierGrid() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(plan_r2c_));
    fftw_destroy_plan(static_cast<fftw_plan>(plan_c2r_));
}

std::vector<double> FourierGrid::nodes() const {
    std::vector<double> x(n_);
    for (std::size_t j = 0; j < n_; ++j) x[j] = node(j);
    return x;
}

std::vector<int> FourierGrid::mode_numbers() const {
    std::vector<int> m;
    m.reserve(n_);
    const int half = static_cast<int>(n_ / 2);
    for (int i = -half + 1; i <= half; ++i) m.push_back(i);
    return m;
}

void FourierGrid::forward(std::span<const double> values, std::span<cplx> spec) const {
    // r2c does not modify its input.
    fftw_execute_dft_r2c(static_cast<fftw_plan>(plan_r2c_), const_cast<double*>(values.data()),
                         as_fftw(spec.data()));
    const double inv_n = 1.0 / static_cast<double>(n_);
    for (auto& c : spec) c *= inv_n;
}

void FourierGrid::inverse(std::span<const cplx> spec, std::span<double> values) const {
    // Planned with FFTW_PRESERVE_INPUT (supported for 1-D c2r).
    fftw_execute_dft_c2r(static_cast<fftw_plan>(plan_c2r_), as_fftw(const_cast<cplx*>(spec.data())),
                         values.data());
}

Grid make_grid(double length, std::size_t n) {
    if (!(length > 0.0) || !std::isfinite(length))
        throw InvalidArgument("grid length must be positive, got " + std::to_string(length));
    if (n % 2 != 0) throw InvalidArgument("grid size must be even, got " + std::to_string(n));
    if (n < 8) throw InvalidArgument("grid size must be at least 8, got " + std::to_string(n));
    return std::make_shared<const FourierGrid>(length, n);
}

// ---------------------------------------------------------------------------
// Field / Spectrum

Field::Field(Grid grid) : grid_(std::move(grid)), values_(grid_->size(), 0.0) {}

Field::Field(Grid grid, std::vector<double> values) : grid_(std::move(grid)), values_(std::move(values)) {
    if (values_.size() != grid_->size()) throw InvalidArgument("field size does not match grid");
}

bool Field::all_finite() const noexcept {
    for (double v : values_)
        if (!std::isfinite(v)) return false;
    return true;
}

Field& Field::operator+=(const Field& o) { return add_scaled(1.0, o); }
Field& Field::operator-=(const Field& o) { return add_scaled(-1.0, o); }

Field& Field::operator*=(double a) {
    for (double& v : values_) v *= a;
    return *this;
}

Field& Field::add_scaled(double a, const Field& o) {
    require_same_grid(*this, o, "Field arithmetic");
    kernels::axpy(a, o.values(), values_);
    return *this;
}

Field operator+(Field a, const Field& b) { return a += b; }
Field operator-(Field a, const Field& b) { return a -= b; }
Field operator*(double a, Field f) { return f *= a; }
Field operator*(Field f, double a) { return f *= a; }
Field operator-(Field f) { return f *= -1.0; }

Spectrum::Spectrum(Grid grid) : grid_(std::move(grid)), c_(grid_->spectrum_size()) {}

Spectrum::Spectrum(Grid grid, std::vector<cplx> coeffs) : grid_(std::move(grid)), c_(std::move(coeffs)) {
    if (c_.size() != grid_->spectrum_size()) throw InvalidArgument("spectrum size does not match grid");
}

Spectrum to_spectrum(const Field& f) {
    Spectrum s(f.grid());
    f.grid()->forward(f.values(), s.coeffs());
    return s;
}

Field to_field(const Spectrum& s) {
    Field f(s.grid());
    s.grid()->inverse(s.coeffs(), f.values());
    return f;
}

void require_same_grid(const Field& a, const Field& b, const char* what) {
    if (!a.grid()->same_as(*b.grid())) throw GridMismatch(std::string(what) + ": fields live on different grids");
}

// ---------------------------------------------------------------------------
// Operators

double mean(const Field& f) { return kernels::sum(f.values()) / static_cast<double>(f.size()); }

Field remove_mean(const Field& f) {
    Field g = f;
    const double m = mean(f);
    for (double& v : g.values()) v -= m;
    return g;
}

double l2_norm(const Field& f) { return std::sqrt(f.grid()->spacing() * kernels::dot(f.values(), f.values())); }

double mean_ratio(const Field& f) {
    const double norm = l2_norm(f);
    if (norm == 0.0) return 0.0;
    return std::fabs(mean(f)) * std::sqrt(f.grid()->length()) / norm;
}

void require_zero_mean(const Field& f, const char* what, double mean_tol) {
    const double r = mean_ratio(f);
    if (!(r <= mean_tol)) throw MeanNotZero(what, r);
}

Field differentiate(const Field& f, int order) {
    if (order < 1) throw InvalidArgument("differentiate: order must be >= 1");
    Spectrum s = to_spectrum(f);
    const auto k = f.grid()->wavenumbers();
    const std::size_t n = f.size();
    for (std::size_t m = 0; m < s.coeffs().size(); ++m) {
        if (is_nyquist(m, n) && order % 2 == 1) s[m] = 0.0;
        else s[m] *= ik_pow(k[m], order);
    }
    return to_field(s);
}

Field antiderivative(const Field& f, int order, double mean_tol) {
    if (order < 1) throw InvalidArgument("antiderivative: order must be >= 1");
    require_zero_mean(f, "antiderivative", mean_tol);
    Spectrum s = to_spectrum(f);
    const auto k = f.grid()->wavenumbers();
    const std::size_t n = f.size();
    s[0] = 0.0;
    for (std::size_t m = 1; m < s.coeffs().size(); ++m) {
        if (is_nyquist(m, n) && order % 2 == 1) s[m] = 0.0;
        else s[m] /= ik_pow(k[m], order);
    }
    return to_field(s);
}

double sobolev_norm(const Field& f, double s) {
    if (s < 0.0) throw InvalidArgument("sobolev_norm: s must be >= 0");
    const Spectrum sp = to_spectrum(f);
    const auto k = f.grid()->wavenumbers();
    const std::size_t n = f.size();
    std::vector<double> w(k.size());
    for (std::size_t m = 0; m < k.size(); ++m) w[m] = multiplicity(m, n) * std::pow(1.0 + k[m] * k[m], s);
    return std::sqrt(f.grid()->length() * kernels::weighted_norm2(sp.coeffs(), w));
}

double homogeneous_negative_norm(const Field& f, int m_order, double mean_tol) {
    if (m_order < 1) throw InvalidArgument("homogeneous_negative_norm: m must be >= 1");
    require_zero_mean(f, "homogeneous_negative_norm", mean_tol);
    const Spectrum sp = to_spectrum(f);
    const auto k = f.grid()->wavenumbers();
    const std::size_t n = f.size();
    std::vector<double> w(k.size(), 0.0);
    for (std::size_t m = 1; m < k.size(); ++m) w[m] = multiplicity(m, n) * std::pow(k[m], -2.0 * m_order);
    return std::sqrt(f.grid()->length() * kernels::weighted_norm2(sp.coeffs(), w));
}

Field semigroup_apply(const Field& f, double tau, double mean_tol) {
    require_zero_mean(f, "semigroup_apply", mean_tol);
    if (tau == 0.0) return f;
    Spectrum s = to_spectrum(f);
    const auto k = f.grid()->wavenumbers();
    const std::size_t n = f.size();
    std::vector<cplx> symbol(k.size(), cplx{1.0, 0.0});
    // The discrete d^{-1} annihilates the Nyquist mode, so S(tau) leaves it alone.
    for (std::size_t m = 1; m < k.size(); ++m)
        if (!is_nyquist(m, n)) symbol[m] = std::polar(1.0, -tau / k[m]);
    kernels::apply_symbol(symbol, s.coeffs());
    return to_field(s);
}

Field translate(const Field& f, double shift) {
    if (shift == 0.0) return f;
    Spectrum s = to_spectrum(f);
    const auto k = f.grid()->wavenumbers();
    const std::size_t n = f.size();
    std::vector<cplx> symbol(k.size(), cplx{1.0, 0.0});
    for (std::size_t m = 1; m < k.size(); ++m)
        if (!is_nyquist(m, n)) symbol[m] = std::polar(1.0, -k[m] * shift);
    kernels::apply_symbol(symbol, s.coeffs());
    return to_field(s);
}

Field dealias(const Field& f) {
    Spectrum s = to_spectrum(f);
    const std::size_t cut = f.grid()->dealias_cutoff();
    for (std::size_t m = cut + 1; m < s.coeffs().size(); ++m) s[m] = 0.0;
    return to_field(s);
}

namespace {

// FFT plans for padded sizes; grids are immutable, so one per size suffices.
const FourierGrid& padded_transform(std::size_t m) {
    static std::mutex mu;
    static std::map<std::size_t, std::unique_ptr<FourierGrid>> cache;
    std::lock_guard lock(mu);
    auto& slot = cache[m];
    if (!slot) slot = std::make_unique<FourierGrid>(1.0, m);
    return *slot;
}

// Alias-free size for a product of `degree` band-limited factors.
std::size_t padded_size(std::size_t n, int degree) {
    const std::size_t m = (static_cast<std::size_t>(degree) + 1) * n / 2 + 1;
    return m + (m % 2);
}

std::vector<double> upsample(const Field& f, const FourierGrid& fine) {
    const Spectrum s = to_spectrum(f);
    std::vector<cplx> c(fine.spectrum_size(), cplx{0.0, 0.0});
    // The Nyquist mode is dropped: it has no well-defined real extension.
    for (std::size_t m = 0; m + 1 < s.coeffs().size(); ++m) c[m] = s[m];
    std::vector<double> v(fine.size());
    fine.inverse(c, v);
    return v;
}

Field downsample(std::span<const double> fine_values, const FourierGrid& fine, const Grid& coarse) {
    std::vector<cplx> c(fine.spectrum_size());
    fine.forward(fine_values, c);
    Spectrum s(coarse);
    for (std::size_t m = 0; m + 1 < s.coeffs().size(); ++m) s[m] = c[m];
    return to_field(s);
}

}  // namespace

std::vector<double> refine(const Field& f, std::size_t factor) {
    if (factor < 1) throw InvalidArgument("refine: factor must be >= 1");
    return upsample(f, padded_transform(factor * f.size()));
}

Field product(const Field& a, const Field& b) {
    require_same_grid(a, b, "product");
    const FourierGrid& fine = padded_transform(padded_size(a.size(), 2));
    const auto av = upsample(a, fine);
    const auto bv = upsample(b, fine);
    std::vector<double> out(fine.size());
    kernels::multiply(av, bv, out);
    return downsample(out, fine, a.grid());
}

Field power(const Field& f, int p) {
    if (p < 0) throw InvalidArgument("power: exponent must be >= 0");
    if (p == 0) return Field::sample(f.grid(), [](double) { return 1.0; });
    const FourierGrid& fine = padded_transform(padded_size(f.size(), p));
    const auto fv = upsample(f, fine);
    std::vector<double> out(fine.size());
    kernels::power(fv, p, out);
    return downsample(out, fine, f.grid());
}

double integrate(const Field& f) { return f.grid()->spacing() * kernels::sum(f.values()); }

double inner(const Field& a, const Field& b) {
    require_same_grid(a, b, "inner");
    return a.grid()->spacing() * kernels::dot(a.values(), b.values());
}

double linf_norm(const Field& f) { return kernels::max_abs(f.values()); }

}  // namespace spulse

#include "providence/binom_kernel.hpp"

#include <algorithm>
#include <numbers>

#include "providence/errors.hpp"

namespace providence::kernel {

namespace {

// Relative magnitude below which a stored mass is treated as zero.
constexpr double kUnderflowRel = 1e-300;
// Tail sums stop once a term is this small relative to the running sum.
constexpr double kTailStopRel = 1e-18;

// Stirling-series remainder ln(n!) - ln(sqrt(2 pi n) (n/e)^n).
double stirlerr(double n) {
    constexpr double S0 = 1.0 / 12.0;
    constexpr double S1 = 1.0 / 360.0;
    constexpr double S2 = 1.0 / 1260.0;
    constexpr double S3 = 1.0 / 1680.0;
    constexpr double S4 = 1.0 / 1188.0;
    if (n <= 15.0) {
        return std::lgamma(n + 1.0) - (n + 0.5) * std::log(n) + n -
               0.5 * std::log(2.0 * std::numbers::pi);
    }
    const double nn = n * n;
    if (n > 500) return (S0 - S1 / nn) / n;
    if (n > 80) return (S0 - (S1 - S2 / nn) / nn) / n;
    if (n > 35) return (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n;
    return (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n;
}

// Deviance term x ln(x/np) + np - x, evaluated without cancellation.
double bd0(double x, double np) {
    if (std::abs(x - np) < 0.1 * (x + np)) {
        double v = (x - np) / (x + np);
        double s = (x - np) * v;
        double ej = 2.0 * x * v;
        v *= v;
        for (int j = 1; j < 1000; ++j) {
            ej *= v;
            const double s1 = s + ej / (2 * j + 1);
            if (s1 == s) return s1;
            s = s1;
        }
        return s;
    }
    return x * std::log(x / np) + np - x;
}

// Saddle-point evaluation of ln Bin(k; n, p) (Loader's method).
double log_pmf_raw(std::int64_t k, std::int64_t n, double p) {
    const double q = 1.0 - p;
    if (k == 0) return n == 0 ? 0.0 : static_cast<double>(n) * std::log1p(-p);
    if (k == n) return static_cast<double>(n) * std::log(p);
    const double x = static_cast<double>(k);
    const double nd = static_cast<double>(n);
    const double lc =
        stirlerr(nd) - stirlerr(x) - stirlerr(nd - x) - bd0(x, nd * p) - bd0(nd - x, nd * q);
    const double lf = std::log(2.0 * std::numbers::pi) + std::log(x) + std::log1p(-x / nd);
    return lc - 0.5 * lf;
}

std::int64_t mode_of(std::int64_t n, double p) {
    const auto m = static_cast<std::int64_t>(std::floor(static_cast<double>(n + 1) * p));
    return std::clamp<std::int64_t>(m, 0, n);
}

// ln sum_{i >= start} pmf(i), for start above the mode (terms decrease).
double upper_sum(std::int64_t start, std::int64_t n, double p) {
    const double odds = p / (1.0 - p);
    double term = 1.0;
    double sum = 1.0;
    for (std::int64_t i = start; i < n; ++i) {
        term *= static_cast<double>(n - i) / static_cast<double>(i + 1) * odds;
        sum += term;
        if (term < kTailStopRel * sum) break;
    }
    return log_pmf_raw(start, n, p) + std::log(sum);
}

// ln sum_{i <= start} pmf(i), for start below the mode (terms decrease).
double lower_sum(std::int64_t start, std::int64_t n, double p) {
    const double inv_odds = (1.0 - p) / p;
    double term = 1.0;
    double sum = 1.0;
    for (std::int64_t i = start; i > 0; --i) {
        term *= static_cast<double>(i) / static_cast<double>(n - i + 1) * inv_odds;
        sum += term;
        if (term < kTailStopRel * sum) break;
    }
    return log_pmf_raw(start, n, p) + std::log(sum);
}

}  // namespace

double log_add_exp(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double hi = std::max(a, b);
    return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

double log_sum_exp(std::span<const double> xs) {
    if (xs.empty()) return kNegInf;
    const double hi = *std::max_element(xs.begin(), xs.end());
    if (hi == kNegInf) return kNegInf;
    if (std::isinf(hi)) return hi;
    double acc = 0.0;
    for (double x : xs) acc += std::exp(x - hi);
    return hi + std::log(acc);
}

double log1m_exp(double x) {
    if (x > 0.0) throw DomainError("log1m_exp: argument must be <= 0");
    if (x == 0.0) return kNegInf;
    // Maechler's switch point keeps full relative precision on both sides.
    return x > -std::numbers::ln2 ? std::log(-std::expm1(x)) : std::log1p(-std::exp(x));
}

void BinomialSpec::validate() const {
    if (n < 0) throw DomainError("binomial: n must be nonnegative");
    if (!(p > 0.0 && p < 1.0)) throw DomainError("binomial: p must lie in (0, 1)");
}

LogProb log_binom_pmf(std::int64_t k, const BinomialSpec& spec) {
    spec.validate();
    if (k < 0 || k > spec.n) throw DomainError("log_binom_pmf: k outside [0, n]");
    return LogProb(log_pmf_raw(k, spec.n, spec.p));
}

LogProb log_binom_sf(std::int64_t k, const BinomialSpec& spec) {
    spec.validate();
    if (k < 0 || k > spec.n + 1) throw DomainError("log_binom_sf: k outside [0, n+1]");
    if (k == 0) return LogProb::one();
    if (k == spec.n + 1) return LogProb::zero();
    if (k > mode_of(spec.n, spec.p)) return LogProb(upper_sum(k, spec.n, spec.p));
    return LogProb(log1m_exp(lower_sum(k - 1, spec.n, spec.p)));
}

LogProb log_binom_cdf(std::int64_t k, const BinomialSpec& spec) {
    spec.validate();
    if (k < -1 || k > spec.n) throw DomainError("log_binom_cdf: k outside [-1, n]");
    if (k == -1) return LogProb::zero();
    if (k == spec.n) return LogProb::one();
    if (k < mode_of(spec.n, spec.p)) return LogProb(lower_sum(k, spec.n, spec.p));
    return LogProb(log1m_exp(upper_sum(k + 1, spec.n, spec.p)));
}

namespace {
void check_ratio_args(std::int64_t k, double p_a, double p_0, std::int64_t n, const char* what) {
    if (n < 0 || k < 0 || k > n) {
        throw DomainError(std::string(what) + ": require 0 <= k <= n");
    }
    if (!(p_0 > 0.0 && p_0 < p_a && p_a < 1.0)) {
        throw DomainError(std::string(what) + ": require 0 < p_0 < p_a < 1");
    }
}
}  // namespace

double log_sigma(std::int64_t k, double p_a, double p_0, std::int64_t n) {
    check_ratio_args(k, p_a, p_0, n, "sigma");
    const double winners = static_cast<double>(k);
    const double losers = static_cast<double>(n - k);
    return winners * std::log(p_a / p_0) + losers * std::log((1.0 - p_a) / (1.0 - p_0));
}

double log_tau1(std::int64_t k, double p_a, double p_0, std::int64_t n) {
    check_ratio_args(k, p_a, p_0, n, "tau1");
    if (k == 0) return 0.0;
    return log_binom_sf(k, {n, p_a}).log() - log_binom_sf(k, {n, p_0}).log();
}

// ---------------------------------------------------------------------------
// TailDistribution

TailDistribution::TailDistribution(std::int64_t support_min, double log_scale,
                                   std::vector<double> mass)
    : support_min_(support_min), log_scale_(log_scale), mass_(std::move(mass)) {
    normalise();
}

void TailDistribution::normalise() {
    if (mass_.empty()) {
        log_scale_ = kNegInf;
        return;
    }
    const double peak = *std::max_element(mass_.begin(), mass_.end());
    if (!(peak > 0.0)) {
        mass_.clear();
        log_scale_ = kNegInf;
        return;
    }
    const double floor = peak * kUnderflowRel;
    auto first = std::find_if(mass_.begin(), mass_.end(), [&](double m) { return m > floor; });
    auto last = std::find_if(mass_.rbegin(), mass_.rend(), [&](double m) { return m > floor; });
    const auto lead = std::distance(mass_.begin(), first);
    std::vector<double> kept(first, last.base());
    for (double& m : kept) m /= peak;
    support_min_ += lead;
    log_scale_ += std::log(peak);
    mass_ = std::move(kept);
}

TailDistribution TailDistribution::point_mass(std::int64_t at) {
    return TailDistribution(at, 0.0, {1.0});
}

TailDistribution TailDistribution::binomial(const BinomialSpec& spec) {
    spec.validate();
    const std::int64_t n = spec.n;
    const double p = spec.p;
    const std::int64_t mode = mode_of(n, p);
    const double odds = p / (1.0 - p);

    std::vector<double> up{1.0};
    double term = 1.0;
    for (std::int64_t i = mode; i < n; ++i) {
        term *= static_cast<double>(n - i) / static_cast<double>(i + 1) * odds;
        if (term < kUnderflowRel) break;
        up.push_back(term);
    }
    std::vector<double> down;
    term = 1.0;
    for (std::int64_t i = mode; i > 0; --i) {
        term *= static_cast<double>(i) / static_cast<double>(n - i + 1) / odds;
        if (term < kUnderflowRel) break;
        down.push_back(term);
    }
    std::vector<double> mass(down.rbegin(), down.rend());
    mass.insert(mass.end(), up.begin(), up.end());
    const std::int64_t lo = mode - static_cast<std::int64_t>(down.size());
    return TailDistribution(lo, log_pmf_raw(mode, n, p), std::move(mass));
}

LogProb TailDistribution::log_mass(std::int64_t k) const {
    if (k < support_min_ || k >= support_end()) return LogProb::zero();
    const double m = mass_[static_cast<std::size_t>(k - support_min_)];
    return m > 0.0 ? LogProb(log_scale_ + std::log(m)) : LogProb::zero();
}

LogProb TailDistribution::total_log_mass() const { return log_tail(support_min_); }

LogProb TailDistribution::log_tail(std::int64_t k) const {
    if (mass_.empty() || k >= support_end()) return LogProb::zero();
    const std::int64_t from = std::max(k, support_min_);
    double acc = 0.0;
    for (auto i = static_cast<std::size_t>(from - support_min_); i < mass_.size(); ++i) {
        acc += mass_[i];
    }
    return acc > 0.0 ? LogProb(log_scale_ + std::log(acc)) : LogProb::zero();
}

std::vector<double> TailDistribution::log_tails() const {
    std::vector<double> out(mass_.size() + 1, kNegInf);
    double acc = 0.0;
    for (std::size_t i = mass_.size(); i-- > 0;) {
        acc += mass_[i];
        out[i] = acc > 0.0 ? log_scale_ + std::log(acc) : kNegInf;
    }
    return out;
}

TailDistribution TailDistribution::truncated_below(std::int64_t kmin) const {
    if (kmin >= support_end()) return *this;
    if (kmin <= support_min_) return TailDistribution(support_min_, kNegInf, {});
    std::vector<double> kept(mass_.begin(), mass_.begin() + (kmin - support_min_));
    return TailDistribution(support_min_, log_scale_, std::move(kept));
}

TailDistribution TailDistribution::convolved(const BinomialSpec& spec) const {
    if (mass_.empty()) return *this;
    const TailDistribution step = binomial(spec);
    std::vector<double> out(mass_.size() + step.mass_.size() - 1, 0.0);
    const double* b = step.mass_.data();
    const std::size_t nb = step.mass_.size();
    for (std::size_t i = 0; i < mass_.size(); ++i) {
        const double a = mass_[i];
        if (a < kUnderflowRel) continue;
        double* dst = out.data() + i;
        for (std::size_t j = 0; j < nb; ++j) dst[j] += a * b[j];
    }
    return TailDistribution(support_min_ + step.support_min_, log_scale_ + step.log_scale_,
                            std::move(out));
}

TailDistribution truncate_and_convolve(const TailDistribution& prior, std::int64_t kmin_prev,
                                       const BinomialSpec& marginal) {
    marginal.validate();
    return prior.truncated_below(kmin_prev).convolved(marginal);
}

}  // namespace providence::kernel

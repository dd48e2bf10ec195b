#pragma once

// Log-space binomial kernels: pmf, tails, the Bravo likelihood ratio sigma,
// the first-round tail ratio tau1, and the truncated-convolution chain used
// by Minerva for rounds after the first.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace providence::kernel {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// ln of a probability; kNegInf represents probability zero.
class LogProb {
public:
    constexpr LogProb() = default;
    explicit constexpr LogProb(double log_value) : value_(log_value) {}

    static constexpr LogProb zero() { return LogProb(kNegInf); }
    static constexpr LogProb one() { return LogProb(0.0); }
    static LogProb from_linear(double p) { return LogProb(p > 0.0 ? std::log(p) : kNegInf); }

    constexpr double log() const { return value_; }
    double linear() const { return std::exp(value_); }
    constexpr bool is_zero() const { return value_ == kNegInf; }

    friend constexpr bool operator==(LogProb, LogProb) = default;
    friend constexpr auto operator<=>(LogProb a, LogProb b) { return a.value_ <=> b.value_; }

private:
    double value_ = kNegInf;
};

// ln(e^a + e^b) without overflow.
double log_add_exp(double a, double b);

// Max-shifted ln(sum exp(x_i)); returns kNegInf for an empty span.
double log_sum_exp(std::span<const double> xs);

// ln(1 - e^x) for x <= 0.
double log1m_exp(double x);

struct BinomialSpec {
    std::int64_t n = 0;
    double p = 0.5;

    // Throws DomainError unless n >= 0 and 0 < p < 1.
    void validate() const;
};

LogProb log_binom_pmf(std::int64_t k, const BinomialSpec& spec);

// ln Pr[K >= k]; defined for 0 <= k <= n + 1.
LogProb log_binom_sf(std::int64_t k, const BinomialSpec& spec);

// ln Pr[K <= k]; defined for -1 <= k <= n.
LogProb log_binom_cdf(std::int64_t k, const BinomialSpec& spec);

// ln of the Bravo ratio for k winner ballots out of n.
double log_sigma(std::int64_t k, double p_a, double p_0, std::int64_t n);

// ln of the ratio of binomial upper tails at k under p_a and p_0.
double log_tau1(std::int64_t k, double p_a, double p_0, std::int64_t n);

// Sub-probability distribution over a contiguous range of winner tallies.
// Stored as a common log scale times max-normalised linear masses, which
// keeps the convolution in plain multiply-adds while never underflowing the
// bulk of the distribution.
class TailDistribution {
public:
    TailDistribution() = default;

    static TailDistribution point_mass(std::int64_t at);
    static TailDistribution binomial(const BinomialSpec& spec);

    std::int64_t support_min() const { return support_min_; }
    // One past the last stored index (masses beyond are zero).
    std::int64_t support_end() const {
        return support_min_ + static_cast<std::int64_t>(mass_.size());
    }
    bool empty() const { return mass_.empty(); }

    LogProb log_mass(std::int64_t k) const;
    LogProb total_log_mass() const;
    // ln sum_{i >= k} mass(i).
    LogProb log_tail(std::int64_t k) const;

    // Returns the upper tail for every k in [support_min, support_end] as
    // natural logs (the last entry is kNegInf).
    std::vector<double> log_tails() const;

    // Zero every mass at indices >= kmin.
    TailDistribution truncated_below(std::int64_t kmin) const;

    // Convolution with Binomial(spec); mass outside the representable range
    // (relative 1e-300 of the peak) is dropped.
    TailDistribution convolved(const BinomialSpec& spec) const;

private:
    TailDistribution(std::int64_t support_min, double log_scale, std::vector<double> mass);
    void normalise();

    std::int64_t support_min_ = 0;
    double log_scale_ = kNegInf;
    std::vector<double> mass_;
};

// Zero the mass at and above kmin_prev, then convolve with the marginal round.
TailDistribution truncate_and_convolve(const TailDistribution& prior, std::int64_t kmin_prev,
                                       const BinomialSpec& marginal);

}  // namespace providence::kernel

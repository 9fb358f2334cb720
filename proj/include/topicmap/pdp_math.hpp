#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <mutex>
#include <vector>

namespace topicmap {

/// log(0) sentinel for impossible table configurations.
inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

/// Triangular table of log generalised Stirling numbers log S^n_{m,a}
/// built from the recurrence
///
///   S^{n+1}_{m,a} = S^n_{m-1,a} + (n - m*a) * S^n_{m,a}
///
/// with S^0_0 = 1 and S^n_m = 0 for m > n or (m = 0, n > 0). Values are
/// kept in log space; S grows super-exponentially and the Gibbs
/// conditionals only ever need well-conditioned ratios of neighbours.
///
/// Reads of already-built rows are lock-free and safe from many threads.
/// Growth is serialized behind a mutex; call ensure() up front before
/// sharing the cache read-only across sampler chains.
class StirlingCache {
public:
    explicit StirlingCache(double discount, std::size_t initial_n = 64);

    double discount() const { return discount_; }

    /// Largest n currently covered.
    std::size_t max_n() const { return n_max_; }

    /// Grows the table so that all n <= n_req are covered. Extension
    /// never changes previously computed entries.
    void ensure(std::size_t n_req);

    /// log S^n_{m,a} for n <= max_n(); m > n yields the log(0) sentinel.
    double operator()(std::size_t n, std::size_t m) const;

    /// Growing lookup: extends the table on demand, then reads.
    double log_stirling(std::size_t n, std::size_t m);

private:
    std::size_t row_offset(std::size_t n) const { return n * (n + 1) / 2; }

    double discount_;
    std::size_t n_max_ = 0;
    std::vector<double> table_;   // row n holds m = 0..n
    std::mutex grow_mutex_;
};

/// log Pochhammer symbol (b|a)_n = prod_{i=0}^{n-1} (b + i*a).
/// The rising factorial (b)_n is the a = 1 case. Throws std::domain_error
/// when any factor is nonpositive.
double log_pochhammer(double b, double a, std::size_t n);

/// log of the multidimensional Beta function: sum lgamma(x_i) - lgamma(sum x_i).
/// Throws std::domain_error for nonpositive components.
double log_beta_vec(const std::vector<double>& params);

/// Same, for a symmetric parameter vector plus per-component integer counts;
/// avoids materializing the vector in the sampler's likelihood evaluation.
double log_beta_counts(const std::vector<double>& params, const std::vector<std::int64_t>& counts);

}  // namespace topicmap

#include "topicmap/pdp_math.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace topicmap {

namespace {

double log_add_exp(double x, double y) {
    if (x == kLogZero) return y;
    if (y == kLogZero) return x;
    const double hi = std::max(x, y);
    const double lo = std::min(x, y);
    return hi + std::log1p(std::exp(lo - hi));
}

}  // namespace

StirlingCache::StirlingCache(double discount, std::size_t initial_n) : discount_(discount) {
    if (discount < 0.0 || discount >= 1.0)
        throw std::domain_error("discount must lie in [0, 1)");
    table_.push_back(0.0);   // S^0_0 = 1
    ensure(initial_n);
}

void StirlingCache::ensure(std::size_t n_req) {
    if (n_req <= n_max_) return;
    std::lock_guard<std::mutex> lock(grow_mutex_);
    if (n_req <= n_max_) return;
    std::size_t target = std::max(n_req, n_max_ * 2);   // geometric growth
    table_.reserve(row_offset(target + 1));             // keeps prev pointers stable below
    for (std::size_t n = n_max_; n < target; ++n) {
        const double* prev = table_.data() + row_offset(n);
        table_.push_back(kLogZero);                     // m = 0, n+1 > 0
        for (std::size_t m = 1; m <= n + 1; ++m) {
            double value = prev[m - 1];
            if (m <= n && prev[m] != kLogZero) {
                const double factor = static_cast<double>(n) - static_cast<double>(m) * discount_;
                assert(factor > 0.0);
                value = log_add_exp(value, std::log(factor) + prev[m]);
            }
            table_.push_back(value);
        }
        n_max_ = n + 1;
    }
}

double StirlingCache::operator()(std::size_t n, std::size_t m) const {
    if (m > n) return kLogZero;
    if (n > n_max_) throw std::out_of_range("StirlingCache: n exceeds built table; call ensure()");
    return table_[row_offset(n) + m];
}

double StirlingCache::log_stirling(std::size_t n, std::size_t m) {
    if (n > n_max_) ensure(n);
    return (*this)(n, m);
}

double log_pochhammer(double b, double a, std::size_t n) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double factor = b + static_cast<double>(i) * a;
        if (factor <= 0.0) throw std::domain_error("log_pochhammer: nonpositive factor");
        sum += std::log(factor);
    }
    return sum;
}

double log_beta_vec(const std::vector<double>& params) {
    if (params.empty()) throw std::domain_error("log_beta_vec: empty parameter vector");
    double sum = 0.0, log_sum = 0.0;
    for (double x : params) {
        if (x <= 0.0) throw std::domain_error("log_beta_vec: nonpositive component");
        log_sum += std::lgamma(x);
        sum += x;
    }
    return log_sum - std::lgamma(sum);
}

double log_beta_counts(const std::vector<double>& params, const std::vector<std::int64_t>& counts) {
    if (params.size() != counts.size())
        throw std::invalid_argument("log_beta_counts: size mismatch");
    double sum = 0.0, log_sum = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double x = params[i] + static_cast<double>(counts[i]);
        if (x <= 0.0) throw std::domain_error("log_beta_counts: nonpositive component");
        log_sum += std::lgamma(x);
        sum += x;
    }
    return log_sum - std::lgamma(sum);
}

}  // namespace topicmap

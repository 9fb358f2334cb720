#include "topicmap/lgpr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "topicmap/eval.hpp"

namespace topicmap {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

double draw_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double draw_normal(std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    return normal(rng);
}

struct Factor {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double log_det = 0.0;
    bool ok = false;
};

Factor factorize(const Eigen::MatrixXd& sigma, double amplitude) {
    Factor f;
    f.llt.compute(sigma);
    if (f.llt.info() != Eigen::Success) {
        // one jitter retry, then give up
        Eigen::MatrixXd jittered = sigma;
        jittered.diagonal().array() += 1e-8 * amplitude * amplitude;
        f.llt.compute(jittered);
        if (f.llt.info() != Eigen::Success) return f;
    }
    f.log_det = 2.0 * f.llt.matrixLLT().diagonal().array().log().sum();
    f.ok = true;
    return f;
}

double gaussian_quad_form(const Factor& f, const Eigen::VectorXd& r) {
    return r.dot(f.llt.solve(r));
}

double mvn_log_density(const Factor& f, const Eigen::VectorXd& r) {
    const double n = static_cast<double>(r.size());
    return -0.5 * (n * kLogTwoPi + f.log_det + gaussian_quad_form(f, r));
}

double log_half_normal(double x, double scale) {
    if (x <= 0.0) return -std::numeric_limits<double>::infinity();
    return 0.5 * std::log(2.0 / std::numbers::pi) - std::log(scale) -
           x * x / (2.0 * scale * scale);
}

double log_inv_gamma(double x, double shape, double scale) {
    if (x <= 0.0) return -std::numeric_limits<double>::infinity();
    return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
}

double log_normal_iid(const Eigen::VectorXd& x, double scale) {
    return -0.5 * (static_cast<double>(x.size()) * (kLogTwoPi + 2.0 * std::log(scale)) +
                   x.squaredNorm() / (scale * scale));
}

double logsumexp(const std::vector<double>& values) {
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : values) hi = std::max(hi, v);
    if (!std::isfinite(hi)) return hi;
    double sum = 0.0;
    for (double v : values) sum += std::exp(v - hi);
    return hi + std::log(sum);
}

double paired_t_pvalue(const Eigen::VectorXd& diff) {
    const double n = static_cast<double>(diff.size());
    if (n < 2) return 1.0;
    const double mean = diff.mean();
    const double var = (diff.array() - mean).square().sum() / (n - 1.0);
    if (var <= 1e-300) return 1.0;   // identical models
    const double t = mean / std::sqrt(var / n);
    boost::math::students_t dist(n - 1.0);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

}  // namespace

void GPDataset::validate() const {
    const Eigen::Index size = y.size();
    if (X.rows() != size || dist.rows() != size || dist.cols() != size)
        throw std::invalid_argument("GPDataset: inconsistent dimensions");
    if (!store_ids.empty() && static_cast<Eigen::Index>(store_ids.size()) != size)
        throw std::invalid_argument("GPDataset: store id count mismatch");
    for (Eigen::Index i = 0; i < size; ++i) {
        if (dist(i, i) != 0.0) throw std::invalid_argument("GPDataset: nonzero distance diagonal");
        for (Eigen::Index j = i + 1; j < size; ++j)
            if (std::abs(dist(i, j) - dist(j, i)) > 1e-9)
                throw std::invalid_argument("GPDataset: distance matrix not symmetric");
    }
}

Eigen::MatrixXd cov_matrix(const Eigen::MatrixXd& dist, double amplitude, double length_scale) {
    if (amplitude == 0.0) return Eigen::MatrixXd::Zero(dist.rows(), dist.cols());
    if (amplitude < 0.0 || length_scale <= 0.0)
        throw std::invalid_argument("cov_matrix: amplitude and length_scale must be positive");
    const double a2 = amplitude * amplitude;
    const double inv = 1.0 / (2.0 * length_scale * length_scale);
    return a2 * (-dist.array().square() * inv).exp();
}

double log_likelihood(const GPDataset& data, const GPParams& params) {
    data.validate();
    if (params.beta.size() != data.X.cols())
        throw std::invalid_argument("log_likelihood: beta dimension mismatch");
    Eigen::MatrixXd sigma = cov_matrix(data.dist, params.amplitude, params.length_scale);
    sigma.diagonal().array() += params.sigma * params.sigma;
    const Factor f = factorize(sigma, params.amplitude);
    if (!f.ok) throw std::runtime_error("log_likelihood: covariance factorization failed");
    return mvn_log_density(f, data.y - data.X * params.beta);
}

namespace {

struct ChainDraws {
    std::vector<GPParams> draws;
    std::vector<double> log_post;
};

double kernel_log_prior(const GPParams& p, const GPPriors& priors, bool gp_enabled) {
    double lp = log_half_normal(p.sigma, priors.sigma_scale);
    if (gp_enabled) {
        lp += log_half_normal(p.amplitude, priors.amplitude_scale);
        lp += log_inv_gamma(p.length_scale, priors.length_scale_shape, priors.length_scale_scale);
    }
    return lp;
}

ChainDraws run_gp_chain(const GPDataset& data, const GPPriors& priors, const GPMcmcConfig& mcmc,
                        bool gp_enabled, int chain) {
    const Eigen::Index n = data.y.size();
    const Eigen::Index p = data.X.cols();
    std::mt19937_64 rng(mcmc.seed + static_cast<std::uint64_t>(chain));

    GPParams params;
    params.beta = Eigen::VectorXd::Zero(p);
    params.sigma = std::max(1e-3, std::abs(draw_normal(rng)) * priors.sigma_scale);
    if (gp_enabled) {
        params.amplitude = std::max(1e-3, std::abs(draw_normal(rng)) * priors.amplitude_scale);
        std::gamma_distribution<double> gamma(priors.length_scale_shape,
                                              1.0 / priors.length_scale_scale);
        params.length_scale = std::clamp(1.0 / std::max(gamma(rng), 1e-12), 1e-2, 1e7);
    } else {
        params.amplitude = 0.0;
        params.length_scale = 1.0;
    }

    auto build_factor = [&](const GPParams& q) {
        Eigen::MatrixXd sigma = gp_enabled
                                    ? cov_matrix(data.dist, q.amplitude, q.length_scale)
                                    : Eigen::MatrixXd::Zero(n, n).eval();
        sigma.diagonal().array() += q.sigma * q.sigma;
        return factorize(sigma, q.amplitude);
    };

    Factor factor = build_factor(params);
    if (!factor.ok) throw std::runtime_error("sample_posterior: initial factorization failed");
    double log_lik = mvn_log_density(factor, data.y - data.X * params.beta);
    if (!std::isfinite(log_lik + kernel_log_prior(params, priors, gp_enabled)))
        throw std::runtime_error("sample_posterior: non-finite posterior at initialization");

    const double tau2 = priors.beta_scale * priors.beta_scale;
    double log_step = std::log(0.3);
    constexpr double target_accept = 0.3;

    ChainDraws out;
    for (int s = 1; s <= mcmc.iters; ++s) {
        // conjugate draw of beta given the kernel parameters
        {
            const Eigen::MatrixXd w = factor.llt.solve(data.X);           // Sigma^-1 X
            Eigen::MatrixXd a = data.X.transpose() * w;
            a.diagonal().array() += 1.0 / tau2;
            Eigen::LLT<Eigen::MatrixXd> llt_a(a);
            if (llt_a.info() != Eigen::Success)
                throw std::runtime_error("sample_posterior: beta precision factorization failed");
            const Eigen::VectorXd mean = llt_a.solve(w.transpose() * data.y);
            Eigen::VectorXd z(p);
            for (Eigen::Index i = 0; i < p; ++i) z[i] = draw_normal(rng);
            params.beta = mean + llt_a.matrixU().solve(z);
            log_lik = mvn_log_density(factor, data.y - data.X * params.beta);
        }

        // random-walk Metropolis on the log kernel scales
        {
            GPParams prop = params;
            const double step = std::exp(log_step);
            prop.sigma = std::exp(std::log(params.sigma) + step * draw_normal(rng));
            if (gp_enabled) {
                prop.amplitude = std::exp(std::log(params.amplitude) + step * draw_normal(rng));
                prop.length_scale =
                    std::exp(std::log(params.length_scale) + step * draw_normal(rng));
            }
            double accept_prob = 0.0;
            const Factor prop_factor = build_factor(prop);
            if (prop_factor.ok) {
                const double prop_lik = mvn_log_density(prop_factor, data.y - data.X * prop.beta);
                // log-scale random walk: include the Jacobian of the transform
                double jac_cur = std::log(params.sigma), jac_prop = std::log(prop.sigma);
                if (gp_enabled) {
                    jac_cur += std::log(params.amplitude) + std::log(params.length_scale);
                    jac_prop += std::log(prop.amplitude) + std::log(prop.length_scale);
                }
                const double delta =
                    prop_lik + kernel_log_prior(prop, priors, gp_enabled) + jac_prop -
                    (log_lik + kernel_log_prior(params, priors, gp_enabled) + jac_cur);
                accept_prob = std::min(1.0, std::exp(std::min(delta, 0.0)));
                if (std::log(draw_uniform(rng) + 1e-300) < delta) {
                    params = prop;
                    factor = prop_factor;
                    log_lik = prop_lik;
                }
            }
            if (s <= mcmc.burn_in) {
                const double gamma = 1.0 / std::pow(static_cast<double>(s), 0.6);
                log_step += gamma * (accept_prob - target_accept);
                log_step = std::clamp(log_step, std::log(1e-4), std::log(10.0));
            }
        }

        if (s >= mcmc.burn_in && (s - mcmc.burn_in) % mcmc.thin == 0) {
            out.draws.push_back(params);
            out.log_post.push_back(log_lik + kernel_log_prior(params, priors, gp_enabled) +
                                   log_normal_iid(params.beta, priors.beta_scale));
        }
    }
    return out;
}

GPDraws run_gp_chains_impl(const GPDataset& data, const GPPriors& priors,
                           const GPMcmcConfig& mcmc, bool gp_enabled) {
    std::vector<ChainDraws> per_chain(mcmc.chains);
    if (mcmc.chains > 1) {
        std::vector<std::thread> pool;
        for (int c = 0; c < mcmc.chains; ++c)
            pool.emplace_back([&, c] { per_chain[c] = run_gp_chain(data, priors, mcmc, gp_enabled, c); });
        for (auto& t : pool) t.join();
    } else {
        per_chain[0] = run_gp_chain(data, priors, mcmc, gp_enabled, 0);
    }

    GPDraws out;
    out.gp_enabled = gp_enabled;
    for (int c = 0; c < mcmc.chains; ++c) {
        for (std::size_t i = 0; i < per_chain[c].draws.size(); ++i) {
            out.draws.push_back(per_chain[c].draws[i]);
            out.log_post.push_back(per_chain[c].log_post[i]);
            out.chain.push_back(c);
        }
    }
    if (out.draws.empty()) throw std::invalid_argument("MCMC cadence yields no draws");

    // split R-hat per scalar over the thinned chains
    if (mcmc.chains >= 2) {
        std::size_t min_len = std::numeric_limits<std::size_t>::max();
        for (const auto& chain : per_chain) min_len = std::min(min_len, chain.draws.size());
        if (min_len >= 10) {
            const Eigen::Index p = out.draws.front().beta.size();
            auto series = [&](auto&& get) {
                std::vector<std::vector<double>> s(mcmc.chains);
                for (int c = 0; c < mcmc.chains; ++c)
                    for (std::size_t i = 0; i < min_len; ++i) s[c].push_back(get(per_chain[c], i));
                return rhat(s);
            };
            out.rhat["log_posterior"] =
                series([](const ChainDraws& c, std::size_t i) { return c.log_post[i]; });
            out.rhat["sigma"] =
                series([](const ChainDraws& c, std::size_t i) { return c.draws[i].sigma; });
            if (gp_enabled) {
                out.rhat["amplitude"] =
                    series([](const ChainDraws& c, std::size_t i) { return c.draws[i].amplitude; });
                out.rhat["length_scale"] = series(
                    [](const ChainDraws& c, std::size_t i) { return c.draws[i].length_scale; });
            }
            for (Eigen::Index j = 0; j < p; ++j)
                out.rhat["beta_" + std::to_string(j)] = series(
                    [j](const ChainDraws& c, std::size_t i) { return c.draws[i].beta[j]; });
        }
    }
    return out;
}

}  // namespace

GPDraws sample_posterior(const GPDataset& data, const GPPriors& priors, const GPMcmcConfig& mcmc) {
    data.validate();
    if (data.n() < 2) throw std::invalid_argument("sample_posterior: need n >= 2");
    if (mcmc.chains < 1 || mcmc.iters < 1 || mcmc.thin < 1 || mcmc.burn_in < 0)
        throw std::invalid_argument("sample_posterior: invalid MCMC cadence");
    return run_gp_chains_impl(data, priors, mcmc, /*gp_enabled=*/true);
}

GPDraws fit_lr_baseline(const GPDataset& data, const GPPriors& priors, const GPMcmcConfig& mcmc) {
    data.validate();
    if (data.n() < 2) throw std::invalid_argument("fit_lr_baseline: need n >= 2");
    return run_gp_chains_impl(data, priors, mcmc, /*gp_enabled=*/false);
}

Prediction predict(const GPDataset& train, const GPDraws& draws, const GPQuery& query) {
    train.validate();
    if (draws.draws.empty()) throw std::invalid_argument("predict: no posterior draws");
    const Eigen::Index m = query.X.rows();
    const Eigen::Index n = train.y.size();
    if (query.cross_dist.rows() != m || query.cross_dist.cols() != n)
        throw std::invalid_argument("predict: cross-distance dimensions mismatch");
    if (query.X.cols() != train.X.cols())
        throw std::invalid_argument("predict: covariate dimension mismatch");

    const std::size_t n_draws = draws.draws.size();
    Prediction pred;
    pred.draw_mean.resize(static_cast<Eigen::Index>(n_draws), m);
    pred.draw_var.resize(static_cast<Eigen::Index>(n_draws), m);

    for (std::size_t s = 0; s < n_draws; ++s) {
        const GPParams& q = draws.draws[s];
        const double marginal = q.amplitude * q.amplitude + q.sigma * q.sigma;
        Eigen::VectorXd mean;
        Eigen::VectorXd var;
        if (q.amplitude == 0.0) {
            mean = query.X * q.beta;
            var = Eigen::VectorXd::Constant(m, q.sigma * q.sigma);
        } else {
            Eigen::MatrixXd sigma11 = cov_matrix(train.dist, q.amplitude, q.length_scale);
            sigma11.diagonal().array() += q.sigma * q.sigma;
            const Factor f = factorize(sigma11, q.amplitude);
            if (!f.ok) throw std::runtime_error("predict: covariance factorization failed");
            const Eigen::MatrixXd k21 = cov_matrix(query.cross_dist, q.amplitude, q.length_scale);
            const Eigen::VectorXd resid = train.y - train.X * q.beta;
            mean = query.X * q.beta + k21 * f.llt.solve(resid);
            const Eigen::MatrixXd v = f.llt.matrixL().solve(k21.transpose());   // n x m
            var = (marginal - v.colwise().squaredNorm().array()).matrix();
            var = var.cwiseMax(0.0);
        }
        pred.draw_mean.row(static_cast<Eigen::Index>(s)) = mean.transpose();
        pred.draw_var.row(static_cast<Eigen::Index>(s)) = var.transpose();
    }

    pred.mean = pred.draw_mean.colwise().mean().transpose();
    // law of total variance over the draw mixture
    Eigen::VectorXd total_var(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto means = pred.draw_mean.col(i);
        const double mean_of_var = pred.draw_var.col(i).mean();
        const double var_of_mean =
            (means.array() - means.mean()).square().sum() / static_cast<double>(means.size());
        total_var[i] = mean_of_var + var_of_mean;
    }
    pred.lower95 = pred.mean - 1.96 * total_var.cwiseSqrt();
    pred.upper95 = pred.mean + 1.96 * total_var.cwiseSqrt();
    return pred;
}

namespace {

Eigen::VectorXd pointwise_lppd(const Prediction& pred, const Eigen::VectorXd& y) {
    const Eigen::Index m = y.size();
    const Eigen::Index s = pred.draw_mean.rows();
    Eigen::VectorXd lppd(m);
    std::vector<double> terms(static_cast<std::size_t>(s));
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index d = 0; d < s; ++d) {
            const double var = std::max(pred.draw_var(d, i), 1e-30);
            const double r = y[i] - pred.draw_mean(d, i);
            terms[static_cast<std::size_t>(d)] =
                -0.5 * (kLogTwoPi + std::log(var) + r * r / var);
        }
        lppd[i] = logsumexp(terms) - std::log(static_cast<double>(s));
    }
    return lppd;
}

}  // namespace

ComparisonResult compare(const GPDataset& train, const GPDraws& draws_a, const GPDraws& draws_b,
                         const GPQuery& heldout, const Eigen::VectorXd& y_heldout) {
    if (y_heldout.size() != heldout.X.rows())
        throw std::invalid_argument("compare: held-out sizes mismatch");
    const Prediction pred_a = predict(train, draws_a, heldout);
    const Prediction pred_b = predict(train, draws_b, heldout);
    const Eigen::Index m = y_heldout.size();
    const double dm = static_cast<double>(m);

    const Eigen::VectorXd sq_a = (pred_a.mean - y_heldout).array().square();
    const Eigen::VectorXd sq_b = (pred_b.mean - y_heldout).array().square();
    const Eigen::VectorXd lppd_a = pointwise_lppd(pred_a, y_heldout);
    const Eigen::VectorXd lppd_b = pointwise_lppd(pred_b, y_heldout);

    auto se_of_mean = [dm](const Eigen::VectorXd& x) {
        if (dm < 2.0) return 0.0;
        const double mean = x.mean();
        return std::sqrt((x.array() - mean).square().sum() / (dm - 1.0) / dm);
    };
    auto se_of_sum = [dm, &se_of_mean](const Eigen::VectorXd& x) { return se_of_mean(x) * dm; };

    ComparisonResult result;
    result.mse_a = sq_a.mean();
    result.mse_b = sq_b.mean();
    result.mse_se_a = se_of_mean(sq_a);
    result.mse_se_b = se_of_mean(sq_b);
    result.lppd_a = lppd_a.sum();
    result.lppd_b = lppd_b.sum();
    result.lppd_se_a = se_of_sum(lppd_a);
    result.lppd_se_b = se_of_sum(lppd_b);
    result.p_mse = paired_t_pvalue(sq_a - sq_b);
    result.p_lppd = paired_t_pvalue(lppd_a - lppd_b);
    return result;
}

Decomposition decompose(const GPDataset& data, const GPDraws& draws) {
    data.validate();
    if (draws.draws.empty()) throw std::invalid_argument("decompose: no posterior draws");
    const Eigen::Index n = data.y.size();
    Eigen::VectorXd beta_mean = Eigen::VectorXd::Zero(data.X.cols());
    Eigen::VectorXd spatial = Eigen::VectorXd::Zero(n);
    for (const auto& q : draws.draws) {
        beta_mean += q.beta;
        if (q.amplitude == 0.0) continue;
        Eigen::MatrixXd k = cov_matrix(data.dist, q.amplitude, q.length_scale);
        Eigen::MatrixXd sigma = k;
        sigma.diagonal().array() += q.sigma * q.sigma;
        const Factor f = factorize(sigma, q.amplitude);
        if (!f.ok) throw std::runtime_error("decompose: covariance factorization failed");
        spatial += k * f.llt.solve(data.y - data.X * q.beta);
    }
    const double s = static_cast<double>(draws.draws.size());
    Decomposition out;
    out.fixed = data.X * (beta_mean / s);
    out.spatial = spatial / s;
    out.noise = data.y - out.fixed - out.spatial;
    return out;
}

}  // namespace topicmap

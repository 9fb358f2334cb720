#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "topicmap/geo.hpp"

namespace topicmap {

struct GPDataset {
    Eigen::VectorXd y;                    // logit topic probabilities
    Eigen::MatrixXd X;                    // n x p design
    Eigen::MatrixXd dist;                 // n x n km
    std::vector<std::string> store_ids;

    int n() const { return static_cast<int>(y.size()); }
    void validate() const;
};

struct GPParams {
    Eigen::VectorXd beta;      // fixed effects
    double amplitude = 1.0;    // kernel marginal sd
    double length_scale = 1.0; // km
    double sigma = 1.0;        // nugget sd
};

/// Weakly informative priors: sigma ~ half-Normal(0,1), beta ~ N(0,10) iid,
/// amplitude ~ half-Normal(0,2), length_scale ~ Inverse-Gamma(2,50).
struct GPPriors {
    double sigma_scale = 1.0;
    double beta_scale = 10.0;
    double amplitude_scale = 2.0;
    double length_scale_shape = 2.0;
    double length_scale_scale = 50.0;
};

struct GPMcmcConfig {
    int chains = 2;
    int iters = 2000;
    int burn_in = 1000;
    int thin = 5;
    std::uint64_t seed = 0;
};

struct GPDraws {
    std::vector<GPParams> draws;      // pooled, ordered by chain then sweep
    std::vector<int> chain;
    std::vector<double> log_post;
    std::map<std::string, double> rhat;   // per scalar, when >= 2 chains
    bool gp_enabled = true;           // false for the LR baseline (amplitude == 0)
};

/// Squared-exponential covariance C_ij = amplitude^2 exp(-d_ij^2 / (2 rho^2)).
Eigen::MatrixXd cov_matrix(const Eigen::MatrixXd& dist, double amplitude, double length_scale);

/// Multivariate normal log density of y under N(X beta, C + sigma^2 I),
/// via Cholesky; one jitter retry of 1e-8 * amplitude^2 on failure.
double log_likelihood(const GPDataset& data, const GPParams& params);

/// Metropolis-within-Gibbs: beta drawn exactly from its conjugate normal
/// conditional; (log amplitude, log length_scale, log sigma) move by an
/// adaptive random-walk targeting ~0.3 acceptance, adaptation frozen
/// after burn-in.
GPDraws sample_posterior(const GPDataset& data, const GPPriors& priors, const GPMcmcConfig& mcmc);

/// Same machinery with the spatial term removed (Sigma = sigma^2 I).
GPDraws fit_lr_baseline(const GPDataset& data, const GPPriors& priors, const GPMcmcConfig& mcmc);

/// Covariates and distances of prediction locations.
struct GPQuery {
    Eigen::MatrixXd X;            // m x p
    Eigen::MatrixXd cross_dist;   // m x n_train km
    Eigen::MatrixXd dist;         // m x m km
    std::vector<std::string> store_ids;
};

struct Prediction {
    Eigen::MatrixXd draw_mean;    // draws x m
    Eigen::MatrixXd draw_var;     // draws x m, includes the nugget
    Eigen::VectorXd mean;         // pooled
    Eigen::VectorXd lower95, upper95;
};

Prediction predict(const GPDataset& train, const GPDraws& draws, const GPQuery& query);

struct ComparisonResult {
    double mse_a = 0.0, mse_b = 0.0;
    double mse_se_a = 0.0, mse_se_b = 0.0;
    double lppd_a = 0.0, lppd_b = 0.0;
    double lppd_se_a = 0.0, lppd_se_b = 0.0;
    double p_mse = 1.0, p_lppd = 1.0;
};

/// Held-out comparison on the logit scale: MSE of posterior-mean
/// predictions, lppd, and paired two-sided t-tests over the pointwise
/// differences.
ComparisonResult compare(const GPDataset& train, const GPDraws& draws_a, const GPDraws& draws_b,
                         const GPQuery& heldout, const Eigen::VectorXd& y_heldout);

struct Decomposition {
    Eigen::VectorXd fixed;     // X beta-hat
    Eigen::VectorXd spatial;   // posterior mean GP residual at the training sites
    Eigen::VectorXd noise;     // y - fixed - spatial
};

Decomposition decompose(const GPDataset& data, const GPDraws& draws);

}  // namespace topicmap

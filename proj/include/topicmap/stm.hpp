#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "topicmap/corpus.hpp"
#include "topicmap/pdp_math.hpp"

namespace topicmap {

/// Hyperparameters and MCMC cadence for the segmented topic model.
struct StmConfig {
    int topics = 100;                    // K
    std::vector<double> alpha;           // store-level Dirichlet; default symmetric 1000/K
    std::vector<double> beta;            // term-level Dirichlet; default symmetric 0.01
    double discount = 0.5;               // PDP discount a in [0, 1)
    double strength = 3.0;               // PDP strength b, b + a > 0
    int iters = 2000;
    int burn_in = 1000;
    int thin = 200;
    int chains = 4;
    int trace_every = 10;
    bool shuffle_tokens = false;         // randomize token visit order per sweep
    std::uint64_t seed = 0;
    int threads = 0;                     // 0 = one thread per chain

    /// Fills defaulted alpha/beta for the given dimensions and validates.
    void resolve(int vocab_size);
    void validate(int vocab_size) const;
    double alpha_sum() const;
    double beta_sum() const;
};

/// Per-token assignments plus every derived count table the block Gibbs
/// conditionals read. Tokens are stored flat, basket-major, train split only.
struct SamplerState {
    int n_topics = 0;
    std::vector<std::int32_t> topic;         // z, per token
    std::vector<std::uint8_t> opens_table;   // u, per token

    // basket-local counts, n_baskets x K
    std::vector<std::int32_t> basket_topic_count;   // N_{k|p,d}
    std::vector<std::int32_t> basket_table_count;   // t_{p,d,k}
    std::vector<std::int32_t> basket_table_total;   // sum_k t_{p,d,k}

    // store-level table counts, D x K and D
    std::vector<std::int64_t> store_table_count;    // t_{d,k}
    std::vector<std::int64_t> store_table_total;

    // term counts, K x V and K (absent in fixed-topic mode)
    std::vector<std::int64_t> term_topic_count;     // N_{k,v}
    std::vector<std::int64_t> topic_token_total;    // N_k
};

struct PosteriorSampleStm {
    Eigen::MatrixXd phi;     // K x V
    Eigen::MatrixXd theta;   // D x K
    int chain = 0;
    int sweep = 0;
};

struct TracePoint {
    int chain = 0;
    int sweep = 0;
    double log_prob = 0.0;
};

struct StmFit {
    StmConfig config;
    std::vector<PosteriorSampleStm> samples;
    std::vector<TracePoint> trace;
    std::optional<double> rhat_log_prob;   // split R-hat over post-burn-in trace
};

struct RefitResult {
    std::vector<Eigen::MatrixXd> theta_samples;   // D x K' each
    Eigen::MatrixXd theta_mean;
    std::vector<TracePoint> trace;
    std::optional<double> rhat_log_prob;
};

struct SimulationResult {
    Corpus corpus;
    Eigen::MatrixXd phi;            // true K x V topics
    Eigen::MatrixXd theta;          // true D x K store mixtures
    std::vector<std::int32_t> topic_of_token;   // ground-truth assignments, basket-major
};

/// Collapsed block Gibbs sampler over topic assignments and table
/// indicators. Each token visit resamples its table indicator from
/// p(u=1) = t/n, removes the token, evaluates the 2K joint conditionals
/// (new table vs occupied table) and reinserts.
class BlockGibbsSampler {
public:
    BlockGibbsSampler(const Corpus& corpus, const StmConfig& config,
                      std::shared_ptr<StirlingCache> stirling, std::uint64_t seed);

    /// Switches to fixed-topic mode: the term side of the conditionals
    /// reads these rows and term counts are not tracked. Call before init().
    void set_fixed_topics(Eigen::MatrixXd phi);

    /// Sequential seating initialization: every token's (z, u) is drawn
    /// from the block Gibbs conditionals given the tokens placed so far,
    /// so the table-count constraints hold by construction.
    void init();

    /// One full pass over all training tokens.
    void sweep();

    /// Collapsed joint log p(z, w, u) including the table-arrangement
    /// factor t!(N-t)!/N! per basket and topic.
    double joint_log_prob() const;

    Eigen::MatrixXd phi_estimate() const;     // K x V posterior mean rows
    Eigen::MatrixXd theta_estimate() const;   // D x K posterior mean rows

    /// Transaction-level mixture estimate for one training basket,
    /// computed on demand (never persisted).
    Eigen::VectorXd nu_estimate(int basket) const;

    const SamplerState& state() const { return state_; }
    int n_train_baskets() const { return static_cast<int>(basket_store_.size()); }
    std::size_t n_tokens() const { return token_word_.size(); }

    /// Full consistency check of every count table against the token
    /// assignments; throws std::logic_error on any violation.
    void validate_state() const;

    /// Overwrites the state with explicit assignments (testing hook for
    /// the exhaustive-enumeration oracle). Rebuilds all counts.
    void force_state(const std::vector<std::int32_t>& topic,
                     const std::vector<std::uint8_t>& opens_table);

private:
    void compute_conditionals(int basket, int word, double n_prime_basket,
                              std::vector<double>& log_weight) const;
    void insert_token(std::size_t tok, int basket, int word, int k, bool opens);
    void remove_token(std::size_t tok, int basket, int word, int k, bool opens);
    void resample_token(std::size_t tok, int basket);
    void refresh_indicator(std::size_t tok, int basket, int k);
    std::size_t sample_choice();
    double uniform();

    const Corpus* corpus_;
    StmConfig config_;
    std::shared_ptr<StirlingCache> stirling_;
    Eigen::MatrixXd fixed_phi_;
    bool fixed_topics_ = false;

    int n_topics_ = 0;
    int vocab_size_ = 0;
    int n_stores_ = 0;
    double alpha_sum_ = 0.0;
    double beta_sum_ = 0.0;

    // flattened train tokens
    std::vector<std::int32_t> token_word_;
    std::vector<std::size_t> basket_offset_;   // n_baskets + 1
    std::vector<std::int32_t> basket_store_;

    SamplerState state_;
    std::mt19937_64 rng_;
    std::vector<double> log_weight_;     // scratch, 2K
    std::vector<double> weight_;         // scratch, 2K
    std::vector<std::size_t> visit_order_;
};

/// Draws a synthetic corpus from the generative model: Dirichlet topics,
/// Dirichlet store mixtures, one CRP per transaction with base theta_d.
/// Duplicate products within a basket are retained so the draw follows
/// the generative process exactly.
SimulationResult simulate(const StmConfig& config, int n_stores, int baskets_per_store,
                          int basket_size, int vocab_size, std::uint64_t seed);

/// Runs `config.chains` independent chains (seeded seed + chain index) and
/// collects thinned posterior samples and joint log-probability traces.
StmFit run_chains(const Corpus& corpus, const StmConfig& config);

/// Gibbs over (z, u) with the topic rows held fixed; only the store and
/// transaction mixtures move. Returns thinned theta estimates.
RefitResult refit_fixed_topics(const Corpus& corpus, const Eigen::MatrixXd& phi_fixed,
                               const StmConfig& config);

}  // namespace topicmap

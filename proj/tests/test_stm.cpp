#include <doctest.h>

#include <cmath>
#include <memory>
#include <set>

#include "stm_oracle.hpp"
#include "testutil.hpp"
#include "topicmap/stm.hpp"

using namespace topicmap;
using testutil::make_corpus;
using testutil::random_corpus;

namespace {

std::shared_ptr<StirlingCache> cache_for(const StmConfig& cfg) {
    return std::make_shared<StirlingCache>(cfg.discount, 64);
}

}  // namespace

TEST_CASE("config validation") {
    StmConfig cfg;
    cfg.topics = 0;
    CHECK_THROWS_AS(cfg.resolve(5), std::invalid_argument);
    cfg.topics = 3;
    cfg.discount = 1.0;
    CHECK_THROWS_AS(cfg.resolve(5), std::invalid_argument);
    cfg.discount = 0.5;
    cfg.strength = -0.5;   // strength + discount must stay positive
    CHECK_THROWS_AS(cfg.resolve(5), std::invalid_argument);
    cfg.strength = 3.0;
    cfg.resolve(5);
    CHECK(cfg.alpha.size() == 3);
    CHECK(cfg.alpha[0] == doctest::Approx(1000.0 / 3.0));
    CHECK(cfg.beta.size() == 5);
    CHECK(cfg.beta[0] == doctest::Approx(0.01));
}

TEST_CASE("init: a single token opens a table and lands on either topic") {
    auto corpus = make_corpus(1, 2, {{0, {0}}});
    StmConfig cfg;
    cfg.topics = 2;
    cfg.resolve(2);
    int topic_one = 0;
    const int trials = 400;
    for (std::uint64_t seed = 0; seed < trials; ++seed) {
        BlockGibbsSampler sampler(corpus, cfg, cache_for(cfg), seed);
        sampler.init();
        sampler.validate_state();
        CHECK(sampler.state().opens_table[0] == 1);   // first customer opens
        topic_one += sampler.state().topic[0];
    }
    // symmetric priors: z uniform over the two topics (5 sigma band)
    CHECK(topic_one > 150);
    CHECK(topic_one < 250);
}

TEST_CASE("init satisfies the state invariants on random corpora and is deterministic") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto corpus = random_corpus(3, 8, 20, 6, seed);
        StmConfig cfg;
        cfg.topics = 4;
        cfg.resolve(8);
        BlockGibbsSampler a(corpus, cfg, cache_for(cfg), seed);
        a.init();
        a.validate_state();
        BlockGibbsSampler b(corpus, cfg, cache_for(cfg), seed);
        b.init();
        CHECK(a.state().topic == b.state().topic);
        CHECK(a.state().opens_table == b.state().opens_table);
    }
}

TEST_CASE("sweeps preserve invariants and conserve counts") {
    auto corpus = random_corpus(3, 10, 30, 7, 11);
    StmConfig cfg;
    cfg.topics = 3;
    cfg.resolve(10);
    BlockGibbsSampler sampler(corpus, cfg, cache_for(cfg), 42);
    sampler.init();
    for (int s = 0; s < 50; ++s) {
        sampler.sweep();
        sampler.validate_state();
        CHECK(std::isfinite(sampler.joint_log_prob()));   // reachable states carry mass
    }
    // sum over topics of basket counts equals the basket size
    const auto& state = sampler.state();
    std::size_t basket = 0;
    for (const auto& tx : corpus.transactions) {
        int total = 0;
        for (int k = 0; k < cfg.topics; ++k)
            total += state.basket_topic_count[basket * cfg.topics + k];
        CHECK(total == static_cast<int>(tx.items.size()));
        ++basket;
    }
}

TEST_CASE("K = 1: topic assignments are pinned, table counts stay in range") {
    auto corpus = make_corpus(1, 3, {{0, {0, 1, 2, 0}}, {0, {1, 1, 2}}});
    StmConfig cfg;
    cfg.topics = 1;
    cfg.resolve(3);
    BlockGibbsSampler sampler(corpus, cfg, cache_for(cfg), 3);
    sampler.init();
    for (int s = 0; s < 200; ++s) {
        sampler.sweep();
        for (auto z : sampler.state().topic) CHECK(z == 0);
        CHECK(sampler.state().basket_table_count[0] >= 1);
        CHECK(sampler.state().basket_table_count[0] <= 4);
        CHECK(sampler.state().basket_table_count[1] >= 1);
        CHECK(sampler.state().basket_table_count[1] <= 3);
    }
    sampler.validate_state();
}

TEST_CASE("joint_log_prob matches a hand computation on a 2-token basket") {
    // One store, one basket (words 0 and 1), K = 2. State: both tokens on
    // topic 0, first opens a table, second joins it.
    auto corpus = make_corpus(1, 2, {{0, {0, 1}}});
    StmConfig cfg = testutil::tiny_config();
    BlockGibbsSampler sampler(corpus, cfg, cache_for(cfg), 0);
    sampler.force_state({0, 0}, {1, 0});

    const double a = cfg.discount, b = cfg.strength;
    // store side: Beta_2(alpha + (1,0)) / Beta_2(alpha)
    const double store = (std::lgamma(1.5) + std::lgamma(0.5) - std::lgamma(2.0)) -
                         (std::lgamma(0.5) + std::lgamma(0.5) - std::lgamma(1.0));
    // transaction side: (b|a)_1 / (b)_2, S^2_1 = 1 - a, arrangement 1!1!/2!
    const double transaction = std::log(b) - std::log(b * (b + 1.0));
    const double stirling = std::log(1.0 - a);
    const double arrangement = std::log(0.5);
    // term side: Beta_2(beta + (1,1)) / Beta_2(beta) for topic 0, empty for topic 1
    const double term = (std::lgamma(1.1) + std::lgamma(1.1) - std::lgamma(2.2)) -
                        (std::lgamma(0.1) + std::lgamma(0.1) - std::lgamma(0.2));
    const double expected = store + transaction + stirling + arrangement + term;
    CHECK(sampler.joint_log_prob() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("joint_log_prob is invariant to relabeling token order within a basket") {
    auto corpus_a = make_corpus(1, 3, {{0, {0, 1, 2}}});
    auto corpus_b = make_corpus(1, 3, {{0, {2, 0, 1}}});
    StmConfig cfg = testutil::tiny_config();
    cfg.beta = {0.1, 0.1, 0.1};
    BlockGibbsSampler a(corpus_a, cfg, cache_for(cfg), 0);
    BlockGibbsSampler b(corpus_b, cfg, cache_for(cfg), 0);
    a.force_state({0, 1, 0}, {1, 1, 1});
    b.force_state({0, 0, 1}, {1, 1, 1});   // same multiset of (word, z, u)
    CHECK(a.joint_log_prob() == doctest::Approx(b.joint_log_prob()).epsilon(1e-12));
}

TEST_CASE("exp(joint) normalizes over the enumerated tiny instance") {
    const auto exact = testutil::enumerate_exact(testutil::tiny_corpus(), testutil::tiny_config());
    double total = 0.0;
    for (const auto& [sig, p] : exact) total += p;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(exact.size() > 10);   // several distinct (z, t) states carry mass
}

TEST_CASE("short-run Gibbs chain tracks the enumerated posterior") {
    // smoke version of the acceptance criterion at reduced sweep count
    const double tv = testutil::chain_tv_distance(testutil::tiny_corpus(), testutil::tiny_config(),
                                                  2000, 200000, 7);
    CHECK(tv < 0.05);
}

TEST_CASE("estimates: theta rows normalize; empty store recovers the prior mean") {
    // store 1 only has a test-split basket, so the sampler never sees it
    auto corpus = make_corpus(2, 4, {{0, {0, 1, 2}}, {1, {1, 2, 3}}});
    corpus.transactions[1].split = Split::test;
    StmConfig cfg;
    cfg.topics = 3;
    cfg.alpha = {2.0, 1.0, 1.0};
    cfg.resolve(4);
    BlockGibbsSampler sampler(corpus, cfg, cache_for(cfg), 9);
    sampler.init();
    sampler.sweep();
    const Eigen::MatrixXd theta = sampler.theta_estimate();
    CHECK(theta.row(0).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(theta(1, 0) == doctest::Approx(0.5));    // alpha_k / alpha_sum
    CHECK(theta(1, 1) == doctest::Approx(0.25));
    const Eigen::MatrixXd phi = sampler.phi_estimate();
    for (int k = 0; k < 3; ++k) CHECK(phi.row(k).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("nu estimate: a = 0 reduces to (N + b theta) / (b + basket size)") {
    auto corpus = make_corpus(1, 3, {{0, {0, 1, 1, 2}}});
    StmConfig cfg;
    cfg.topics = 2;
    cfg.discount = 0.0;
    cfg.resolve(3);
    BlockGibbsSampler sampler(corpus, cfg, cache_for(cfg), 5);
    sampler.init();
    const Eigen::VectorXd nu = sampler.nu_estimate(0);
    const Eigen::MatrixXd theta = sampler.theta_estimate();
    const auto& state = sampler.state();
    for (int k = 0; k < 2; ++k) {
        const double n_k = state.basket_topic_count[k];
        const double expected = (n_k + cfg.strength * theta(0, k)) / (cfg.strength + 4.0);
        CHECK(nu[k] == doctest::Approx(expected).epsilon(1e-12));
    }
    CHECK(nu.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("run_chains cadence and determinism") {
    auto corpus = random_corpus(2, 6, 12, 5, 3);
    StmConfig cfg;
    cfg.topics = 2;
    cfg.iters = 100;
    cfg.burn_in = 80;
    cfg.thin = 5;
    cfg.chains = 4;
    cfg.trace_every = 10;
    cfg.seed = 17;

    StmFit fit = run_chains(corpus, cfg);
    // production cadence at 1/1000 scale: samples at 80, 85, 90, 95, 100
    CHECK(fit.samples.size() == 20);
    int chain0 = 0;
    for (const auto& s : fit.samples)
        if (s.chain == 0) ++chain0;
    CHECK(chain0 == 5);
    CHECK(fit.trace.size() == 4 * 10);

    StmFit again = run_chains(corpus, cfg);
    REQUIRE(again.samples.size() == fit.samples.size());
    for (std::size_t i = 0; i < fit.samples.size(); ++i) {
        CHECK(fit.samples[i].phi == again.samples[i].phi);
        CHECK(fit.samples[i].theta == again.samples[i].theta);
    }
}

TEST_CASE("run_chains reports R-hat once the post-burn-in trace is long enough") {
    auto corpus = random_corpus(2, 6, 12, 5, 3);
    StmConfig cfg;
    cfg.topics = 2;
    cfg.iters = 200;
    cfg.burn_in = 50;
    cfg.thin = 50;
    cfg.chains = 2;
    cfg.trace_every = 10;
    StmFit fit = run_chains(corpus, cfg);
    REQUIRE(fit.rhat_log_prob.has_value());
    CHECK(*fit.rhat_log_prob > 0.5);
    CHECK(*fit.rhat_log_prob < 3.0);
}

TEST_CASE("simulate: K = 1 sends every token to topic 0") {
    StmConfig cfg;
    cfg.topics = 1;
    auto sim = simulate(cfg, 2, 3, 4, 6, 21);
    for (auto z : sim.topic_of_token) CHECK(z == 0);
    CHECK(sim.theta.rows() == 2);
    CHECK(sim.theta(0, 0) == doctest::Approx(1.0));
    CHECK(sim.corpus.n_transactions() == 6);
}

TEST_CASE("simulate: strength -> infinity makes transaction mixtures track theta") {
    StmConfig cfg;
    cfg.topics = 4;
    cfg.discount = 0.0;
    cfg.strength = 1e6;
    cfg.alpha = {1.0, 1.0, 1.0, 1.0};
    auto sim = simulate(cfg, 1, 1, 100000, 10, 33);
    Eigen::VectorXd freq = Eigen::VectorXd::Zero(4);
    for (auto z : sim.topic_of_token) freq[z] += 1.0;
    freq /= static_cast<double>(sim.topic_of_token.size());
    CHECK((freq - sim.theta.row(0).transpose()).cwiseAbs().sum() < 0.02);
}

TEST_CASE("simulate: empirical term frequencies per topic match the true topics") {
    StmConfig cfg;
    cfg.topics = 5;
    auto sim = simulate(cfg, 20, 63, 80, 50, 55);   // ~1e5 tokens
    Eigen::MatrixXd freq = Eigen::MatrixXd::Zero(5, 50);
    std::size_t tok = 0;
    for (const auto& tx : sim.corpus.transactions)
        for (auto word : tx.items) freq(sim.topic_of_token[tok++], word) += 1.0;
    for (int k = 0; k < 5; ++k) {
        const double total = freq.row(k).sum();
        REQUIRE(total > 0);
        CHECK((freq.row(k) / total - sim.phi.row(k)).cwiseAbs().sum() < 0.05);
    }
}

TEST_CASE("refit with a single fixed topic pins theta to [1]") {
    auto corpus = random_corpus(2, 5, 10, 5, 8);
    Eigen::MatrixXd phi(1, 5);
    phi.setConstant(0.2);
    StmConfig cfg;
    cfg.chains = 1;
    cfg.iters = 30;
    cfg.burn_in = 10;
    cfg.thin = 10;
    RefitResult refit = refit_fixed_topics(corpus, phi, cfg);
    CHECK(refit.theta_mean.rows() == 2);
    CHECK(refit.theta_mean.cols() == 1);
    CHECK(refit.theta_mean(0, 0) == doctest::Approx(1.0));
    CHECK(refit.theta_mean(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("refit cadence: production settings yield 30 samples") {
    auto corpus = random_corpus(2, 5, 8, 4, 8);
    Eigen::MatrixXd phi(2, 5);
    phi.setConstant(0.2);
    StmConfig cfg;
    cfg.chains = 1;
    cfg.iters = 15500;
    cfg.burn_in = 1000;
    cfg.thin = 500;
    RefitResult refit = refit_fixed_topics(corpus, phi, cfg);
    CHECK(refit.theta_samples.size() == 30);
}

TEST_CASE("refit rejects unnormalized topic rows") {
    auto corpus = random_corpus(1, 4, 5, 4, 2);
    Eigen::MatrixXd phi(1, 4);
    phi.setConstant(0.3);
    StmConfig cfg;
    CHECK_THROWS_AS(refit_fixed_topics(corpus, phi, cfg), std::invalid_argument);
}

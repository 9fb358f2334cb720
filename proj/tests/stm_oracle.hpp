#pragma once

// Exhaustive-enumeration oracle for the block Gibbs sampler on the tiny
// instance: one store, two 2-token baskets, V = 2, K = 2. Small enough
// to enumerate every (z, u) configuration and evaluate the collapsed
// joint exactly.

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "testutil.hpp"
#include "topicmap/stm.hpp"

namespace testutil {

inline topicmap::Corpus tiny_corpus() {
    return make_corpus(1, 2, {{0, {0, 1}}, {0, {0, 0}}});
}

inline topicmap::StmConfig tiny_config() {
    topicmap::StmConfig cfg;
    cfg.topics = 2;
    cfg.alpha = {0.5, 0.5};
    cfg.beta = {0.1, 0.1};
    cfg.discount = 0.5;
    cfg.strength = 3.0;
    return cfg;
}

/// Signature of the collapsed state (z, t): topic per token plus table
/// counts per basket and topic.
inline std::string state_signature(const topicmap::BlockGibbsSampler& sampler) {
    const auto& state = sampler.state();
    std::string sig;
    for (auto z : state.topic) sig.push_back(static_cast<char>('0' + z));
    sig.push_back('|');
    for (auto t : state.basket_table_count) sig.push_back(static_cast<char>('0' + t));
    return sig;
}

/// Exact posterior over (z, t) signatures, obtained by enumerating every
/// per-token (z, u) configuration and grouping by signature.
inline std::map<std::string, double> enumerate_exact(const topicmap::Corpus& corpus,
                                                     const topicmap::StmConfig& config) {
    using namespace topicmap;
    std::size_t n_tokens = 0;
    for (const auto& tx : corpus.transactions) n_tokens += tx.items.size();
    auto stirling = std::make_shared<StirlingCache>(config.discount, 16);
    BlockGibbsSampler sampler(corpus, config, stirling, 0);

    std::map<std::string, double> log_mass;
    std::vector<std::int32_t> z(n_tokens);
    std::vector<std::uint8_t> u(n_tokens);
    const std::size_t n_configs = std::size_t{1} << (2 * n_tokens);
    for (std::size_t code = 0; code < n_configs; ++code) {
        for (std::size_t i = 0; i < n_tokens; ++i) {
            z[i] = static_cast<std::int32_t>((code >> (2 * i)) & 1);
            u[i] = static_cast<std::uint8_t>((code >> (2 * i + 1)) & 1);
        }
        sampler.force_state(z, u);
        const double lp = sampler.joint_log_prob();
        if (lp == -std::numeric_limits<double>::infinity()) continue;
        const std::string sig = state_signature(sampler);
        auto [it, inserted] = log_mass.emplace(sig, lp);
        if (!inserted) {
            const double hi = std::max(it->second, lp);
            it->second = hi + std::log(std::exp(it->second - hi) + std::exp(lp - hi));
        }
    }
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& [sig, lp] : log_mass) hi = std::max(hi, lp);
    double total = 0.0;
    std::map<std::string, double> probs;
    for (const auto& [sig, lp] : log_mass) total += (probs[sig] = std::exp(lp - hi));
    for (auto& [sig, p] : probs) p /= total;
    return probs;
}

/// Total-variation distance between the chain's empirical distribution
/// over (z, t) signatures and the exact enumeration.
inline double chain_tv_distance(const topicmap::Corpus& corpus, const topicmap::StmConfig& config,
                                std::size_t burn_in, std::size_t n_sweeps, std::uint64_t seed) {
    using namespace topicmap;
    const auto exact = enumerate_exact(corpus, config);
    auto stirling = std::make_shared<StirlingCache>(config.discount, 16);
    BlockGibbsSampler sampler(corpus, config, stirling, seed);
    sampler.init();
    for (std::size_t s = 0; s < burn_in; ++s) sampler.sweep();
    std::map<std::string, double> counts;
    for (std::size_t s = 0; s < n_sweeps; ++s) {
        sampler.sweep();
        counts[state_signature(sampler)] += 1.0;
    }
    double tv = 0.0;
    for (const auto& [sig, p] : exact) {
        const auto it = counts.find(sig);
        const double emp = it == counts.end() ? 0.0 : it->second / static_cast<double>(n_sweeps);
        tv += std::abs(emp - p);
    }
    for (const auto& [sig, c] : counts)
        if (!exact.count(sig)) tv += c / static_cast<double>(n_sweeps);
    return tv / 2.0;
}

}  // namespace testutil

#pragma once

// Shared fixtures and independent oracles for the test suites.

#include <random>
#include <string>
#include <vector>

#include "topicmap/corpus.hpp"

namespace testutil {

/// Builds a corpus directly from (store, items) pairs, bypassing ingest.
inline topicmap::Corpus make_corpus(int n_stores, int vocab_size,
                                    const std::vector<std::pair<int, std::vector<int>>>& baskets) {
    topicmap::Corpus corpus;
    std::vector<std::string> terms;
    for (int v = 0; v < vocab_size; ++v) terms.push_back("p" + std::to_string(v));
    corpus.vocabulary = topicmap::Vocabulary::from_terms(std::move(terms));
    for (int d = 0; d < n_stores; ++d) corpus.store_ids.push_back("s" + std::to_string(d));
    corpus.min_basket = 1;
    for (const auto& [store, items] : baskets) {
        topicmap::Transaction tx;
        tx.store = store;
        for (int item : items) tx.items.push_back(item);
        corpus.transactions.push_back(std::move(tx));
    }
    std::stable_sort(corpus.transactions.begin(), corpus.transactions.end(),
                     [](const auto& a, const auto& b) { return a.store < b.store; });
    return corpus;
}

/// Random small corpus for property tests.
inline topicmap::Corpus random_corpus(int n_stores, int vocab_size, int n_baskets,
                                      int max_basket, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::pair<int, std::vector<int>>> baskets;
    std::uniform_int_distribution<int> store_dist(0, n_stores - 1);
    std::uniform_int_distribution<int> size_dist(1, max_basket);
    std::uniform_int_distribution<int> word_dist(0, vocab_size - 1);
    for (int i = 0; i < n_baskets; ++i) {
        std::vector<int> items(size_dist(rng));
        for (auto& w : items) w = word_dist(rng);
        baskets.emplace_back(i < n_stores ? i : store_dist(rng), std::move(items));
    }
    return make_corpus(n_stores, vocab_size, baskets);
}

}  // namespace testutil

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace topicmap {

class CorpusError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Fixed product assortment. Index is a bijection term -> [0, V).
struct Vocabulary {
    std::vector<std::string> terms;            // ordered by frequency rank
    std::unordered_map<std::string, int> index;

    int size() const { return static_cast<int>(terms.size()); }

    static Vocabulary from_terms(std::vector<std::string> terms);
};

enum class Split : std::uint8_t { train = 0, test = 1 };

/// One basket: a store index and the distinct products bought.
struct Transaction {
    int store = 0;
    std::vector<std::int32_t> items;   // vocabulary indices
    Split split = Split::train;
};

/// Raw input record, one per line of the transactions file.
struct RawRecord {
    std::string store_id;
    std::vector<std::string> products;
};

struct Corpus {
    Vocabulary vocabulary;
    std::vector<std::string> store_ids;      // dense store index -> original id
    std::vector<Transaction> transactions;   // grouped by ascending store index
    int min_basket = 3;

    int n_stores() const { return static_cast<int>(store_ids.size()); }
    int n_transactions() const { return static_cast<int>(transactions.size()); }
    std::size_t token_count(Split split) const;
    std::size_t max_basket_size() const;
    int count(Split split) const;

    /// Full structural check: index ranges, basket sizes, store coverage.
    void validate() const;

    /// Round-trips the corpus back to raw records (used for the
    /// re-ingestion idempotence property and by the simulator).
    std::vector<RawRecord> to_records() const;
};

/// Filters raw records down to the top_v most frequent products
/// (frequency = number of baskets containing the product, ties broken
/// lexicographically), collapses duplicates within a basket, drops
/// baskets with fewer than min_basket surviving items and densely
/// re-indexes the surviving stores.
Corpus ingest_records(const std::vector<RawRecord>& records, int top_v, int min_basket = 3);

/// Reads line-delimited JSON records {"store_id": str, "products": [str,...]}.
/// Malformed lines raise CorpusError with the offending line number.
Corpus ingest(const std::string& path, int top_v, int min_basket = 3);

/// Per-store stratified train/test tagging. floor(test_fraction * n) baskets
/// per store become test, capped so every store keeps at least one training
/// transaction. Same seed, same corpus -> identical tags.
void split_corpus(Corpus& corpus, double test_fraction, std::uint64_t seed);

}  // namespace topicmap

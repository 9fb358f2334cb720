#include "topicmap/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include <json.hpp>

namespace topicmap {

Vocabulary Vocabulary::from_terms(std::vector<std::string> terms) {
    Vocabulary vocab;
    vocab.terms = std::move(terms);
    for (int i = 0; i < static_cast<int>(vocab.terms.size()); ++i) {
        auto [it, inserted] = vocab.index.emplace(vocab.terms[i], i);
        if (!inserted)
            throw CorpusError("duplicate product id in vocabulary: " + vocab.terms[i]);
    }
    return vocab;
}

std::size_t Corpus::token_count(Split split) const {
    std::size_t n = 0;
    for (const auto& tx : transactions)
        if (tx.split == split) n += tx.items.size();
    return n;
}

std::size_t Corpus::max_basket_size() const {
    std::size_t n = 0;
    for (const auto& tx : transactions) n = std::max(n, tx.items.size());
    return n;
}

int Corpus::count(Split split) const {
    int n = 0;
    for (const auto& tx : transactions)
        if (tx.split == split) ++n;
    return n;
}

void Corpus::validate() const {
    const int v = vocabulary.size();
    if (v < 1) throw CorpusError("empty vocabulary");
    if (static_cast<int>(vocabulary.index.size()) != v)
        throw CorpusError("vocabulary index is not a bijection");
    std::vector<bool> has_train(store_ids.size(), false);
    int prev_store = 0;
    for (const auto& tx : transactions) {
        if (tx.store < 0 || tx.store >= n_stores())
            throw CorpusError("store index out of range");
        if (tx.store < prev_store)
            throw CorpusError("transactions not grouped by store");
        prev_store = tx.store;
        for (auto item : tx.items)
            if (item < 0 || item >= v)
                throw CorpusError("item index out of range");
        if (tx.split == Split::train) has_train[tx.store] = true;
    }
    for (std::size_t d = 0; d < has_train.size(); ++d)
        if (!has_train[d])
            throw CorpusError("store " + store_ids[d] + " has no training transaction");
}

std::vector<RawRecord> Corpus::to_records() const {
    std::vector<RawRecord> records;
    records.reserve(transactions.size());
    for (const auto& tx : transactions) {
        RawRecord rec;
        rec.store_id = store_ids[tx.store];
        rec.products.reserve(tx.items.size());
        for (auto item : tx.items) rec.products.push_back(vocabulary.terms[item]);
        records.push_back(std::move(rec));
    }
    return records;
}

Corpus ingest_records(const std::vector<RawRecord>& records, int top_v, int min_basket) {
    if (top_v < 1) throw CorpusError("top_v must be >= 1");
    if (min_basket < 1) throw CorpusError("min_basket must be >= 1");

    // Deduplicate within each basket, then count how many baskets carry
    // each product. Quantities do not matter, presence does.
    std::vector<std::vector<std::string>> baskets;
    baskets.reserve(records.size());
    std::map<std::string, std::int64_t> freq;
    for (const auto& rec : records) {
        std::vector<std::string> unique(rec.products);
        std::sort(unique.begin(), unique.end());
        unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
        for (const auto& p : unique) ++freq[p];
        baskets.push_back(std::move(unique));
    }

    // Top-V by (count desc, id asc). The map already orders ids.
    std::vector<std::pair<std::string, std::int64_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (static_cast<int>(ranked.size()) > top_v) ranked.resize(top_v);
    std::vector<std::string> terms;
    terms.reserve(ranked.size());
    for (auto& [term, count] : ranked) terms.push_back(term);
    Vocabulary vocab = Vocabulary::from_terms(std::move(terms));

    // Restrict baskets to the vocabulary and apply the size filter.
    struct Pending {
        std::string store_id;
        std::vector<std::int32_t> items;
    };
    std::vector<Pending> kept;
    for (std::size_t i = 0; i < baskets.size(); ++i) {
        std::vector<std::int32_t> items;
        for (const auto& p : baskets[i]) {
            auto it = vocab.index.find(p);
            if (it != vocab.index.end()) items.push_back(it->second);
        }
        if (static_cast<int>(items.size()) < min_basket) continue;
        std::sort(items.begin(), items.end());
        kept.push_back({records[i].store_id, std::move(items)});
    }
    if (kept.empty()) throw CorpusError("empty corpus");

    std::set<std::string> surviving_stores;
    for (const auto& p : kept) surviving_stores.insert(p.store_id);

    Corpus corpus;
    corpus.min_basket = min_basket;
    corpus.vocabulary = std::move(vocab);
    corpus.store_ids.assign(surviving_stores.begin(), surviving_stores.end());
    std::unordered_map<std::string, int> store_index;
    for (int d = 0; d < corpus.n_stores(); ++d) store_index[corpus.store_ids[d]] = d;

    corpus.transactions.reserve(kept.size());
    for (auto& p : kept) {
        Transaction tx;
        tx.store = store_index[p.store_id];
        tx.items = std::move(p.items);
        corpus.transactions.push_back(std::move(tx));
    }
    std::stable_sort(corpus.transactions.begin(), corpus.transactions.end(),
                     [](const Transaction& a, const Transaction& b) { return a.store < b.store; });
    return corpus;
}

Corpus ingest(const std::string& path, int top_v, int min_basket) {
    std::ifstream in(path);
    if (!in) throw CorpusError("cannot open " + path);
    std::vector<RawRecord> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw CorpusError("line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!doc.is_object() || !doc.contains("store_id") || !doc.contains("products") ||
            !doc["store_id"].is_string() || !doc["products"].is_array())
            throw CorpusError("line " + std::to_string(lineno) +
                              ": expected {\"store_id\": str, \"products\": [str,...]}");
        RawRecord rec;
        rec.store_id = doc["store_id"].get<std::string>();
        for (const auto& p : doc["products"]) {
            if (!p.is_string())
                throw CorpusError("line " + std::to_string(lineno) + ": product ids must be strings");
            rec.products.push_back(p.get<std::string>());
        }
        records.push_back(std::move(rec));
    }
    if (records.empty()) throw CorpusError("empty corpus");
    return ingest_records(records, top_v, min_basket);
}

void split_corpus(Corpus& corpus, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw CorpusError("test_fraction must be in (0, 1)");
    std::mt19937_64 rng(seed);
    for (auto& tx : corpus.transactions) tx.split = Split::train;

    // Transactions are grouped by store; walk the groups.
    std::size_t begin = 0;
    while (begin < corpus.transactions.size()) {
        std::size_t end = begin;
        const int store = corpus.transactions[begin].store;
        while (end < corpus.transactions.size() && corpus.transactions[end].store == store) ++end;
        const std::size_t n = end - begin;
        std::size_t n_test = static_cast<std::size_t>(test_fraction * static_cast<double>(n));
        if (n_test >= n) n_test = n - 1;   // keep >= 1 training basket
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = begin + i;
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i = 0; i < n_test; ++i)
            corpus.transactions[order[i]].split = Split::test;
        begin = end;
    }
}

}  // namespace topicmap

#include "topicmap/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace topicmap {

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double cosine_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return 1.0 - cosine_similarity(a, b);
}

double perplexity(const Corpus& corpus, Split split, const Eigen::MatrixXd& phi,
                  const Eigen::MatrixXd& theta, double discount, double strength,
                  double smoothing) {
    (void)discount;
    (void)strength;
    if (phi.rows() != theta.cols()) throw std::invalid_argument("perplexity: K mismatch");
    if (phi.cols() != corpus.vocabulary.size())
        throw std::invalid_argument("perplexity: V mismatch");
    const double v = static_cast<double>(phi.cols());
    double total = 0.0;
    std::size_t n_tokens = 0;
    for (const auto& tx : corpus.transactions) {
        if (tx.split != split) continue;
        if (tx.store >= theta.rows())
            throw std::invalid_argument("perplexity: store missing from theta");
        for (auto word : tx.items) {
            double p = 0.0;
            for (Eigen::Index k = 0; k < phi.rows(); ++k)
                p += theta(tx.store, k) * phi(k, word);
            if (p <= 0.0) {
                // smoothed fallback keeps unseen products finite
                for (Eigen::Index k = 0; k < phi.rows(); ++k)
                    p += theta(tx.store, k) * (phi(k, word) + smoothing) / (1.0 + smoothing * v);
            }
            total += std::log(p);
            ++n_tokens;
        }
    }
    if (n_tokens == 0) throw std::invalid_argument("perplexity: no held-out tokens");
    return -total / static_cast<double>(n_tokens);
}

double npmi(const Eigen::VectorXd& topic, const Corpus& corpus, int top_n) {
    if (top_n < 2) throw std::invalid_argument("npmi: top_n must be >= 2");
    const int v = corpus.vocabulary.size();
    if (topic.size() != v) throw std::invalid_argument("npmi: V mismatch");
    top_n = std::min(top_n, v);

    // top_n most probable products, ties to the lower index
    std::vector<int> order(v);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return topic[a] > topic[b]; });
    std::vector<int> top(order.begin(), order.begin() + top_n);
    std::vector<int> slot(v, -1);
    for (int i = 0; i < top_n; ++i) slot[top[i]] = i;

    std::vector<double> single(top_n, 0.0);
    std::vector<double> joint(static_cast<std::size_t>(top_n) * top_n, 0.0);
    double n_baskets = 0.0;
    std::vector<int> present;
    for (const auto& tx : corpus.transactions) {
        if (tx.split != Split::train) continue;
        n_baskets += 1.0;
        present.clear();
        for (auto item : tx.items)
            if (slot[item] >= 0) present.push_back(slot[item]);
        // presence, not multiplicity: simulated baskets may repeat a product
        std::sort(present.begin(), present.end());
        present.erase(std::unique(present.begin(), present.end()), present.end());
        for (std::size_t i = 0; i < present.size(); ++i) {
            single[present[i]] += 1.0;
            for (std::size_t j = i + 1; j < present.size(); ++j)
                joint[static_cast<std::size_t>(present[i]) * top_n + present[j]] += 1.0;
        }
    }
    if (n_baskets == 0.0) throw std::invalid_argument("npmi: no training baskets");

    constexpr double eps = 1e-12;
    double sum = 0.0;
    int n_pairs = 0;
    for (int i = 0; i < top_n; ++i) {
        for (int j = i + 1; j < top_n; ++j) {
            ++n_pairs;
            const double pij =
                (joint[static_cast<std::size_t>(i) * top_n + j] +
                 joint[static_cast<std::size_t>(j) * top_n + i]) / n_baskets;
            const double pi = single[i] / n_baskets;
            const double pj = single[j] / n_baskets;
            if (pij <= 0.0 || pi <= 0.0 || pj <= 0.0) {
                sum += -1.0;   // never observed together
            } else if (pij >= 1.0) {
                sum += 1.0;    // present in every basket
            } else {
                const double pmi = std::log(std::max(pij, eps)) -
                                   std::log(std::max(pi * pj, eps));
                sum += pmi / -std::log(std::max(pij, eps));
            }
        }
    }
    return sum / static_cast<double>(n_pairs);
}

std::optional<double> distinctiveness(const Eigen::VectorXd& topic,
                                      const std::vector<Eigen::VectorXd>& peers) {
    if (peers.empty()) return std::nullopt;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& peer : peers) best = std::min(best, cosine_distance(topic, peer));
    return best;
}

double credibility(const Eigen::VectorXd& topic,
                   const std::vector<Eigen::MatrixXd>& other_samples) {
    if (other_samples.empty()) throw std::invalid_argument("credibility: need >= 1 other sample");
    double sum = 0.0;
    for (const auto& sample : other_samples) {
        double best = 0.0;
        for (Eigen::Index k = 0; k < sample.rows(); ++k)
            best = std::max(best, cosine_similarity(topic, sample.row(k).transpose()));
        sum += best;
    }
    return sum / static_cast<double>(other_samples.size());
}

AlignmentResult align_greedy(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() == 0 || b.rows() == 0)
        throw std::invalid_argument("align_greedy: both sets must be non-empty");
    if (a.cols() != b.cols()) throw std::invalid_argument("align_greedy: V mismatch");
    const int na = static_cast<int>(a.rows()), nb = static_cast<int>(b.rows());
    Eigen::MatrixXd sim(na, nb);
    for (int i = 0; i < na; ++i)
        for (int j = 0; j < nb; ++j)
            sim(i, j) = cosine_similarity(a.row(i).transpose(), b.row(j).transpose());

    std::vector<bool> used_a(na, false), used_b(nb, false);
    AlignmentResult result;
    const int n_pairs = std::min(na, nb);
    for (int step = 0; step < n_pairs; ++step) {
        int best_i = -1, best_j = -1;
        double best = -2.0;
        for (int i = 0; i < na; ++i) {
            if (used_a[i]) continue;
            for (int j = 0; j < nb; ++j) {
                if (used_b[j]) continue;
                if (sim(i, j) > best) {
                    best = sim(i, j);
                    best_i = i;
                    best_j = j;
                }
            }
        }
        used_a[best_i] = true;
        used_b[best_j] = true;
        result.pairs.push_back({best_i, best_j, best});
    }
    if (na > nb) {
        for (int i = 0; i < na; ++i)
            if (!used_a[i]) result.unmatched.push_back(i);
    } else if (nb > na) {
        for (int j = 0; j < nb; ++j)
            if (!used_b[j]) result.unmatched.push_back(j);
    }
    return result;
}

double rhat(const std::vector<std::vector<double>>& chains) {
    if (chains.size() < 2) throw std::invalid_argument("rhat: need >= 2 chains");
    const std::size_t len = chains[0].size();
    for (const auto& chain : chains)
        if (chain.size() != len) throw std::invalid_argument("rhat: unequal chain lengths");
    if (len < 10) throw std::invalid_argument("rhat: chains must have length >= 10");

    // split each chain into halves (middle sample dropped when odd)
    const std::size_t half = len / 2;
    std::vector<std::pair<double, double>> half_stats;   // (mean, variance)
    for (const auto& chain : chains) {
        for (int part = 0; part < 2; ++part) {
            const std::size_t begin = part == 0 ? 0 : len - half;
            double mean = 0.0;
            for (std::size_t i = 0; i < half; ++i) mean += chain[begin + i];
            mean /= static_cast<double>(half);
            double var = 0.0;
            for (std::size_t i = 0; i < half; ++i) {
                const double d = chain[begin + i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(half - 1);
            half_stats.emplace_back(mean, var);
        }
    }

    const double m = static_cast<double>(half_stats.size());
    const double n = static_cast<double>(half);
    double grand = 0.0;
    for (const auto& [mean, var] : half_stats) grand += mean;
    grand /= m;
    double between = 0.0, within = 0.0;
    for (const auto& [mean, var] : half_stats) {
        between += (mean - grand) * (mean - grand);
        within += var;
    }
    between *= n / (m - 1.0);
    within /= m;

    constexpr double tiny = 1e-300;
    if (within < tiny) return between < tiny ? 1.0 : std::numeric_limits<double>::infinity();
    const double var_plus = (n - 1.0) / n * within + between / n;
    return std::sqrt(var_plus / within);
}

}  // namespace topicmap

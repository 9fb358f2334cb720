#include "topicmap/topic_summary.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <limits>
#include <queue>
#include <thread>

#include "topicmap/eval.hpp"

namespace topicmap {

int TopicBag::n_samples() const {
    int n = 0;
    for (int s : sample_index) n = std::max(n, s + 1);
    return n;
}

TopicBag make_bag(const std::vector<PosteriorSampleStm>& samples) {
    if (samples.empty()) throw std::invalid_argument("make_bag: no posterior samples");
    const Eigen::Index k = samples[0].phi.rows();
    const Eigen::Index v = samples[0].phi.cols();
    TopicBag bag;
    bag.topics.resize(static_cast<Eigen::Index>(samples.size()) * k, v);
    for (std::size_t s = 0; s < samples.size(); ++s) {
        if (samples[s].phi.rows() != k || samples[s].phi.cols() != v)
            throw std::invalid_argument("make_bag: inconsistent sample shapes");
        bag.topics.middleRows(static_cast<Eigen::Index>(s) * k, k) = samples[s].phi;
        for (Eigen::Index i = 0; i < k; ++i) bag.sample_index.push_back(static_cast<int>(s));
    }
    return bag;
}

namespace {

struct Cluster {
    Eigen::VectorXd sum;        // sum of member rows; mean = sum / size
    int size = 0;
    int key = 0;                // lowest member index, for tie-breaking
    std::vector<int> members;
    std::set<int> samples;
    bool alive = true;
};

struct Candidate {
    double dist;
    int a, b;                   // cluster ids, key(a) <= key(b) at push time
    int key_a, key_b;
};

struct CandidateOrder {
    bool operator()(const Candidate& x, const Candidate& y) const {
        if (x.dist != y.dist) return x.dist > y.dist;
        if (x.key_a != y.key_a) return x.key_a > y.key_a;
        return x.key_b > y.key_b;
    }
};

bool samples_disjoint(const std::set<int>& a, const std::set<int>& b) {
    const auto& small = a.size() <= b.size() ? a : b;
    const auto& large = a.size() <= b.size() ? b : a;
    for (int s : small)
        if (large.count(s)) return false;
    return true;
}

double cluster_distance(const Cluster& a, const Cluster& b) {
    return cosine_distance(a.sum / a.size, b.sum / b.size);
}

}  // namespace

std::vector<ClusteredTopic> cluster(const TopicBag& bag, double threshold) {
    if (bag.size() == 0) throw std::invalid_argument("cluster: empty bag");
    if (static_cast<int>(bag.sample_index.size()) != bag.size())
        throw std::invalid_argument("cluster: sample index count mismatch");
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("cluster: threshold must lie in (0, 1)");

    std::vector<Cluster> clusters(bag.size());
    for (int i = 0; i < bag.size(); ++i) {
        clusters[i].sum = bag.topics.row(i).transpose();
        clusters[i].size = 1;
        clusters[i].key = i;
        clusters[i].members = {i};
        clusters[i].samples = {bag.sample_index[i]};
    }

    std::priority_queue<Candidate, std::vector<Candidate>, CandidateOrder> queue;
    auto push_pair = [&](int a, int b) {
        if (clusters[a].key > clusters[b].key) std::swap(a, b);
        queue.push({cluster_distance(clusters[a], clusters[b]), a, b,
                    clusters[a].key, clusters[b].key});
    };
    for (int i = 0; i < bag.size(); ++i)
        for (int j = i + 1; j < bag.size(); ++j) push_pair(i, j);

    // pairs whose distance was overwritten to 1 (same-sample members)
    std::set<std::pair<int, int>> blocked;

    while (!queue.empty()) {
        const Candidate top = queue.top();
        if (top.dist > threshold) break;
        queue.pop();
        if (!clusters[top.a].alive || !clusters[top.b].alive) continue;
        if (blocked.count({top.a, top.b})) continue;
        if (!samples_disjoint(clusters[top.a].samples, clusters[top.b].samples)) {
            blocked.insert({top.a, top.b});
            continue;
        }

        Cluster merged;
        merged.sum = clusters[top.a].sum + clusters[top.b].sum;
        merged.size = clusters[top.a].size + clusters[top.b].size;
        merged.key = std::min(clusters[top.a].key, clusters[top.b].key);
        merged.members = clusters[top.a].members;
        merged.members.insert(merged.members.end(), clusters[top.b].members.begin(),
                              clusters[top.b].members.end());
        std::sort(merged.members.begin(), merged.members.end());
        merged.samples = clusters[top.a].samples;
        merged.samples.insert(clusters[top.b].samples.begin(), clusters[top.b].samples.end());
        clusters[top.a].alive = false;
        clusters[top.b].alive = false;
        clusters.push_back(std::move(merged));
        const int id = static_cast<int>(clusters.size()) - 1;
        for (int i = 0; i < id; ++i)
            if (clusters[i].alive) push_pair(i, id);
    }

    std::vector<ClusteredTopic> result;
    for (const auto& c : clusters) {
        if (!c.alive) continue;
        ClusteredTopic out;
        out.mean = c.sum / c.sum.sum();
        out.size = c.size;
        out.members = c.members;
        out.samples = c.samples;
        result.push_back(std::move(out));
    }
    return result;
}

std::vector<ClusteredTopic> select(const std::vector<ClusteredTopic>& clusters, int min_size) {
    if (min_size < 1) throw std::invalid_argument("select: min_size must be >= 1");
    std::vector<ClusteredTopic> kept;
    for (const auto& c : clusters) {
        if (c.size < min_size) continue;
        ClusteredTopic out = c;
        out.mean /= out.mean.sum();
        kept.push_back(std::move(out));
    }
    if (kept.empty())
        std::cerr << "warning: no clusters of size >= " << min_size << "\n";
    return kept;
}

std::vector<GridRow> grid_evaluate(const TopicBag& bag, const std::vector<double>& thresholds,
                                   const std::vector<int>& min_sizes, const Corpus& corpus,
                                   const GridEvalConfig& config) {
    // per-sample topic sets, for the credibility of each clustered topic
    std::vector<Eigen::MatrixXd> sample_sets;
    {
        const int n_samples = bag.n_samples();
        std::vector<std::vector<int>> rows(n_samples);
        for (int i = 0; i < bag.size(); ++i) rows[bag.sample_index[i]].push_back(i);
        for (const auto& ids : rows) {
            Eigen::MatrixXd set(ids.size(), bag.topics.cols());
            for (std::size_t r = 0; r < ids.size(); ++r) set.row(r) = bag.topics.row(ids[r]);
            sample_sets.push_back(std::move(set));
        }
    }

    std::vector<std::vector<ClusteredTopic>> clustered;
    clustered.reserve(thresholds.size());
    for (double t : thresholds) clustered.push_back(cluster(bag, t));

    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<GridRow> rows(thresholds.size() * min_sizes.size());
    auto evaluate_cell = [&](std::size_t cell) {
        const std::size_t ti = cell / min_sizes.size();
        const std::size_t mi = cell % min_sizes.size();
        GridRow row;
        row.threshold = thresholds[ti];
        row.min_size = min_sizes[mi];
        auto subset = select(clustered[ti], min_sizes[mi]);
        row.n_clusters = static_cast<int>(subset.size());
        if (subset.empty()) {
            row.perplexity = row.mean_npmi = row.mean_distinctiveness = row.mean_credibility = nan;
            rows[cell] = row;
            return;
        }
        Eigen::MatrixXd phi(subset.size(), bag.topics.cols());
        for (std::size_t i = 0; i < subset.size(); ++i) phi.row(i) = subset[i].mean.transpose();

        StmConfig refit_cfg = config.refit;
        refit_cfg.seed += cell;    // independent cells remain reproducible
        auto refit = refit_fixed_topics(corpus, phi, refit_cfg);
        row.perplexity = perplexity(corpus, Split::test, phi, refit.theta_mean,
                                    refit_cfg.discount, refit_cfg.strength);

        double npmi_sum = 0.0, dist_sum = 0.0, cred_sum = 0.0;
        int dist_count = 0;
        for (std::size_t i = 0; i < subset.size(); ++i) {
            npmi_sum += npmi(subset[i].mean, corpus, config.npmi_top_n);
            std::vector<Eigen::VectorXd> peers;
            for (std::size_t j = 0; j < subset.size(); ++j)
                if (j != i) peers.push_back(subset[j].mean);
            if (auto d = distinctiveness(subset[i].mean, peers)) {
                dist_sum += *d;
                ++dist_count;
            }
            cred_sum += credibility(subset[i].mean, sample_sets);
        }
        row.mean_npmi = npmi_sum / static_cast<double>(subset.size());
        row.mean_distinctiveness = dist_count > 0 ? dist_sum / dist_count : nan;
        row.mean_credibility = cred_sum / static_cast<double>(subset.size());
        rows[cell] = row;
    };

    const std::size_t n_cells = rows.size();
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    std::size_t n_threads = config.threads > 0 ? static_cast<std::size_t>(config.threads)
                                               : static_cast<std::size_t>(hw);
    n_threads = std::min(n_threads, n_cells);
    if (n_threads > 1) {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t c = next++; c < n_cells; c = next++) evaluate_cell(c);
            });
        for (auto& t : pool) t.join();
    } else {
        for (std::size_t c = 0; c < n_cells; ++c) evaluate_cell(c);
    }
    return rows;
}

}  // namespace topicmap

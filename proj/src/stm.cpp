#include "topicmap/stm.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <thread>

#include "topicmap/eval.hpp"

namespace topicmap {

namespace {

double draw_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Eigen::VectorXd draw_dirichlet(const std::vector<double>& concentration, std::mt19937_64& rng) {
    Eigen::VectorXd out(concentration.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < concentration.size(); ++i) {
        std::gamma_distribution<double> gamma(concentration[i], 1.0);
        out[static_cast<Eigen::Index>(i)] = gamma(rng);
        sum += out[static_cast<Eigen::Index>(i)];
    }
    if (sum <= 0.0) {
        out.setConstant(1.0 / static_cast<double>(concentration.size()));
        return out;
    }
    return out / sum;
}

int draw_categorical(const Eigen::VectorXd& probs, std::mt19937_64& rng) {
    double r = draw_uniform(rng);
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        if (r < probs[i]) return static_cast<int>(i);
        r -= probs[i];
    }
    return static_cast<int>(probs.size() - 1);
}

}  // namespace

void StmConfig::resolve(int vocab_size) {
    if (alpha.empty()) alpha.assign(static_cast<std::size_t>(topics), 1000.0 / topics);
    if (beta.empty()) beta.assign(static_cast<std::size_t>(vocab_size), 0.01);
    validate(vocab_size);
}

void StmConfig::validate(int vocab_size) const {
    if (topics < 1) throw std::invalid_argument("topics must be >= 1");
    if (static_cast<int>(alpha.size()) != topics) throw std::invalid_argument("alpha size != K");
    if (static_cast<int>(beta.size()) != vocab_size) throw std::invalid_argument("beta size != V");
    for (double a : alpha)
        if (a <= 0.0) throw std::invalid_argument("alpha components must be positive");
    for (double b : beta)
        if (b <= 0.0) throw std::invalid_argument("beta components must be positive");
    if (discount < 0.0 || discount >= 1.0) throw std::invalid_argument("discount must be in [0, 1)");
    if (strength + discount <= 0.0) throw std::invalid_argument("strength + discount must be positive");
    if (iters < 0 || burn_in < 0 || thin < 1 || chains < 1 || trace_every < 1)
        throw std::invalid_argument("invalid MCMC cadence");
}

double StmConfig::alpha_sum() const {
    double s = 0.0;
    for (double a : alpha) s += a;
    return s;
}

double StmConfig::beta_sum() const {
    double s = 0.0;
    for (double b : beta) s += b;
    return s;
}

BlockGibbsSampler::BlockGibbsSampler(const Corpus& corpus, const StmConfig& config,
                                     std::shared_ptr<StirlingCache> stirling, std::uint64_t seed)
    : corpus_(&corpus), config_(config), stirling_(std::move(stirling)), rng_(seed) {
    config_.validate(corpus.vocabulary.size());
    n_topics_ = config_.topics;
    vocab_size_ = corpus.vocabulary.size();
    n_stores_ = corpus.n_stores();
    alpha_sum_ = config_.alpha_sum();
    beta_sum_ = config_.beta_sum();

    basket_offset_.push_back(0);
    for (const auto& tx : corpus.transactions) {
        if (tx.split != Split::train) continue;
        if (tx.store < 0 || tx.store >= n_stores_)
            throw std::invalid_argument("transaction store index out of range");
        for (auto item : tx.items) {
            if (item < 0 || item >= vocab_size_)
                throw std::invalid_argument("transaction item index out of range");
            token_word_.push_back(item);
        }
        basket_offset_.push_back(token_word_.size());
        basket_store_.push_back(tx.store);
    }
    if (token_word_.empty()) throw std::invalid_argument("corpus has no training tokens");

    stirling_->ensure(corpus.max_basket_size() + 1);

    const std::size_t n_baskets = basket_store_.size();
    state_.n_topics = n_topics_;
    state_.topic.assign(token_word_.size(), -1);
    state_.opens_table.assign(token_word_.size(), 0);
    state_.basket_topic_count.assign(n_baskets * n_topics_, 0);
    state_.basket_table_count.assign(n_baskets * n_topics_, 0);
    state_.basket_table_total.assign(n_baskets, 0);
    state_.store_table_count.assign(static_cast<std::size_t>(n_stores_) * n_topics_, 0);
    state_.store_table_total.assign(n_stores_, 0);
    state_.term_topic_count.assign(static_cast<std::size_t>(n_topics_) * vocab_size_, 0);
    state_.topic_token_total.assign(n_topics_, 0);

    log_weight_.assign(2 * static_cast<std::size_t>(n_topics_), kLogZero);
    weight_.assign(2 * static_cast<std::size_t>(n_topics_), 0.0);
    visit_order_.resize(token_word_.size());
    for (std::size_t i = 0; i < visit_order_.size(); ++i) visit_order_[i] = i;
}

void BlockGibbsSampler::set_fixed_topics(Eigen::MatrixXd phi) {
    if (phi.cols() != vocab_size_) throw std::invalid_argument("fixed topics: V mismatch");
    if (phi.rows() != n_topics_) throw std::invalid_argument("fixed topics: K mismatch");
    fixed_phi_ = std::move(phi);
    fixed_topics_ = true;
    state_.term_topic_count.clear();
    state_.topic_token_total.clear();
}

double BlockGibbsSampler::uniform() { return draw_uniform(rng_); }

void BlockGibbsSampler::insert_token(std::size_t tok, int basket, int word, int k, bool opens) {
    state_.topic[tok] = k;
    state_.opens_table[tok] = opens ? 1 : 0;
    const std::size_t bk = static_cast<std::size_t>(basket) * n_topics_ + k;
    ++state_.basket_topic_count[bk];
    if (opens) {
        ++state_.basket_table_count[bk];
        ++state_.basket_table_total[basket];
        const int d = basket_store_[basket];
        ++state_.store_table_count[static_cast<std::size_t>(d) * n_topics_ + k];
        ++state_.store_table_total[d];
    }
    if (!fixed_topics_) {
        ++state_.term_topic_count[static_cast<std::size_t>(k) * vocab_size_ + word];
        ++state_.topic_token_total[k];
    }
}

void BlockGibbsSampler::remove_token(std::size_t tok, int basket, int word, int k, bool opens) {
    (void)tok;
    const std::size_t bk = static_cast<std::size_t>(basket) * n_topics_ + k;
    --state_.basket_topic_count[bk];
    if (opens) {
        --state_.basket_table_count[bk];
        --state_.basket_table_total[basket];
        const int d = basket_store_[basket];
        --state_.store_table_count[static_cast<std::size_t>(d) * n_topics_ + k];
        --state_.store_table_total[d];
    }
    if (!fixed_topics_) {
        --state_.term_topic_count[static_cast<std::size_t>(k) * vocab_size_ + word];
        --state_.topic_token_total[k];
    }
    assert(state_.basket_topic_count[bk] >= 0 && state_.basket_table_count[bk] >= 0);
}

void BlockGibbsSampler::compute_conditionals(int basket, int word, double n_prime_basket,
                                             std::vector<double>& log_weight) const {
    const int K = n_topics_;
    const int d = basket_store_[basket];
    const std::int32_t* bn = &state_.basket_topic_count[static_cast<std::size_t>(basket) * K];
    const std::int32_t* bt = &state_.basket_table_count[static_cast<std::size_t>(basket) * K];
    const std::int64_t* sd = &state_.store_table_count[static_cast<std::size_t>(d) * K];
    const double store_total = static_cast<double>(state_.store_table_total[d]);
    const double tables_in_basket = static_cast<double>(state_.basket_table_total[basket]);
    const double token_denominator = config_.strength + n_prime_basket;
    const double open_rate = (config_.strength + config_.discount * tables_in_basket) / token_denominator;
    const StirlingCache& S = *stirling_;

    for (int k = 0; k < K; ++k) {
        const std::size_t n = static_cast<std::size_t>(bn[k]);
        const std::size_t t = static_cast<std::size_t>(bt[k]);
        double term;
        if (fixed_topics_) {
            term = std::max(fixed_phi_(k, word), 1e-300);
        } else {
            term = (config_.beta[word] +
                    static_cast<double>(
                        state_.term_topic_count[static_cast<std::size_t>(k) * vocab_size_ + word])) /
                   (beta_sum_ + static_cast<double>(state_.topic_token_total[k]));
        }
        const double store_factor =
            (config_.alpha[k] + static_cast<double>(sd[k])) / (alpha_sum_ + store_total);
        const double base = S(n, t);

        // new table, u = 1
        log_weight[2 * k] =
            S(n + 1, t + 1) - base +
            std::log(store_factor * open_rate *
                     ((static_cast<double>(t) + 1.0) / (static_cast<double>(n) + 1.0)) * term);

        // occupied table, u = 0, only where a table already serves k
        if (t >= 1) {
            log_weight[2 * k + 1] =
                S(n + 1, t) - base +
                std::log(((static_cast<double>(n) - static_cast<double>(t) + 1.0) /
                          (static_cast<double>(n) + 1.0)) *
                         term / token_denominator);
        } else {
            log_weight[2 * k + 1] = kLogZero;
        }
    }
}

void BlockGibbsSampler::refresh_indicator(std::size_t tok, int basket, int k) {
    const std::size_t bk = static_cast<std::size_t>(basket) * n_topics_ + k;
    const std::int32_t n = state_.basket_topic_count[bk];
    const std::int32_t t = state_.basket_table_count[bk];
    // Given (z, t) the openers form a uniformly random t-subset of the
    // topic's tokens, so this token opens a table with probability t/n.
    const bool fresh = uniform() * static_cast<double>(n) < static_cast<double>(t);
    const bool current = state_.opens_table[tok] != 0;
    if (fresh == current) return;

    // Swap roles with another token of the same topic in this basket so
    // the table counts stay the exact sum of the indicators.
    const std::int32_t eligible = fresh ? t : n - t;
    assert(eligible >= 1);
    std::int32_t pick = static_cast<std::int32_t>(uniform() * eligible);
    if (pick >= eligible) pick = eligible - 1;
    const std::uint8_t wanted = fresh ? 1 : 0;
    for (std::size_t m = basket_offset_[basket]; m < basket_offset_[basket + 1]; ++m) {
        if (m == tok || state_.topic[m] != k || state_.opens_table[m] != wanted) continue;
        if (pick-- == 0) {
            state_.opens_table[m] = wanted ^ 1;
            state_.opens_table[tok] = wanted;
            return;
        }
    }
    assert(false && "indicator swap found no counterpart");
}

void BlockGibbsSampler::resample_token(std::size_t tok, int basket) {
    const int k_old = state_.topic[tok];
    const int word = token_word_[tok];
    refresh_indicator(tok, basket, k_old);
    const bool u_old = state_.opens_table[tok] != 0;
    remove_token(tok, basket, word, k_old, u_old);

    const std::size_t bk = static_cast<std::size_t>(basket) * n_topics_ + k_old;
    if (state_.basket_topic_count[bk] > 0 && state_.basket_table_count[bk] == 0) {
        // Removing the only table of a still-occupied topic leaves the
        // remaining tokens seatless; every other joint assignment has
        // zero probability, so the token goes straight back.
        insert_token(tok, basket, word, k_old, true);
        return;
    }

    const double n_prime =
        static_cast<double>(basket_offset_[basket + 1] - basket_offset_[basket]) - 1.0;
    compute_conditionals(basket, word, n_prime, log_weight_);
    const std::size_t choice = sample_choice();
    insert_token(tok, basket, word, static_cast<int>(choice / 2), choice % 2 == 0);
}

// Max-subtracted categorical draw over the 2K (topic, indicator) pairs
// currently in log_weight_.
std::size_t BlockGibbsSampler::sample_choice() {
    double max_lw = kLogZero;
    for (double lw : log_weight_) max_lw = std::max(max_lw, lw);
    double total = 0.0;
    for (std::size_t j = 0; j < log_weight_.size(); ++j) {
        weight_[j] = log_weight_[j] == kLogZero ? 0.0 : std::exp(log_weight_[j] - max_lw);
        total += weight_[j];
    }
    double r = uniform() * total;
    std::size_t choice = 0;
    for (std::size_t j = 0; j < weight_.size(); ++j) {
        if (weight_[j] <= 0.0) continue;
        choice = j;
        if (r < weight_[j]) break;
        r -= weight_[j];
    }
    return choice;
}

void BlockGibbsSampler::init() {
    // Sequential seating: place each token by drawing from the block
    // conditionals given everything placed before it.
    for (std::size_t b = 0; b < basket_store_.size(); ++b) {
        for (std::size_t tok = basket_offset_[b]; tok < basket_offset_[b + 1]; ++tok) {
            const double placed = static_cast<double>(tok - basket_offset_[b]);
            compute_conditionals(static_cast<int>(b), token_word_[tok], placed, log_weight_);
            const std::size_t choice = sample_choice();
            insert_token(tok, static_cast<int>(b), token_word_[tok],
                         static_cast<int>(choice / 2), choice % 2 == 0);
        }
    }
}

void BlockGibbsSampler::sweep() {
    if (config_.shuffle_tokens)
        std::shuffle(visit_order_.begin(), visit_order_.end(), rng_);
    std::size_t b = 0;
    for (std::size_t tok : visit_order_) {
        if (config_.shuffle_tokens) {
            b = static_cast<std::size_t>(
                    std::upper_bound(basket_offset_.begin(), basket_offset_.end(), tok) -
                    basket_offset_.begin()) - 1;
        } else {
            while (tok >= basket_offset_[b + 1]) ++b;
        }
        resample_token(tok, static_cast<int>(b));
    }
}

double BlockGibbsSampler::joint_log_prob() const {
    const int K = n_topics_;
    double lp = 0.0;

    // store side: Beta_K(alpha + sum_p t_pd) / Beta_K(alpha)
    const double log_beta_alpha = log_beta_vec(config_.alpha);
    std::vector<std::int64_t> counts(K);
    for (int d = 0; d < n_stores_; ++d) {
        for (int k = 0; k < K; ++k)
            counts[k] = state_.store_table_count[static_cast<std::size_t>(d) * K + k];
        lp += log_beta_counts(config_.alpha, counts) - log_beta_alpha;
    }

    // transaction side: Pochhammer ratio, Stirling numbers, arrangement factor
    for (std::size_t b = 0; b < basket_store_.size(); ++b) {
        const std::size_t size = basket_offset_[b + 1] - basket_offset_[b];
        lp += log_pochhammer(config_.strength, config_.discount,
                             static_cast<std::size_t>(state_.basket_table_total[b])) -
              log_pochhammer(config_.strength, 1.0, size);
        for (int k = 0; k < K; ++k) {
            const std::int32_t n = state_.basket_topic_count[b * K + k];
            if (n == 0) continue;
            const std::int32_t t = state_.basket_table_count[b * K + k];
            lp += (*stirling_)(static_cast<std::size_t>(n), static_cast<std::size_t>(t));
            lp += std::lgamma(t + 1.0) + std::lgamma(n - t + 1.0) - std::lgamma(n + 1.0);
            if (lp == kLogZero) return kLogZero;
        }
    }

    // term side
    if (fixed_topics_) {
        for (std::size_t tok = 0; tok < token_word_.size(); ++tok)
            lp += std::log(std::max(fixed_phi_(state_.topic[tok], token_word_[tok]), 1e-300));
    } else {
        const double log_beta_beta = log_beta_vec(config_.beta);
        std::vector<std::int64_t> term_counts(vocab_size_);
        for (int k = 0; k < K; ++k) {
            for (int v = 0; v < vocab_size_; ++v)
                term_counts[v] = state_.term_topic_count[static_cast<std::size_t>(k) * vocab_size_ + v];
            lp += log_beta_counts(config_.beta, term_counts) - log_beta_beta;
        }
    }
    return lp;
}

Eigen::MatrixXd BlockGibbsSampler::phi_estimate() const {
    if (fixed_topics_) return fixed_phi_;
    Eigen::MatrixXd phi(n_topics_, vocab_size_);
    for (int k = 0; k < n_topics_; ++k) {
        const double denom = beta_sum_ + static_cast<double>(state_.topic_token_total[k]);
        for (int v = 0; v < vocab_size_; ++v)
            phi(k, v) = (config_.beta[v] +
                         static_cast<double>(
                             state_.term_topic_count[static_cast<std::size_t>(k) * vocab_size_ + v])) /
                        denom;
    }
    return phi;
}

Eigen::MatrixXd BlockGibbsSampler::theta_estimate() const {
    Eigen::MatrixXd theta(n_stores_, n_topics_);
    for (int d = 0; d < n_stores_; ++d) {
        const double denom = alpha_sum_ + static_cast<double>(state_.store_table_total[d]);
        for (int k = 0; k < n_topics_; ++k)
            theta(d, k) = (config_.alpha[k] +
                           static_cast<double>(
                               state_.store_table_count[static_cast<std::size_t>(d) * n_topics_ + k])) /
                          denom;
    }
    return theta;
}

Eigen::VectorXd BlockGibbsSampler::nu_estimate(int basket) const {
    const int K = n_topics_;
    const int d = basket_store_[basket];
    const double size = static_cast<double>(basket_offset_[basket + 1] - basket_offset_[basket]);
    const double tables = static_cast<double>(state_.basket_table_total[basket]);
    const double denom = config_.strength + size;
    const double theta_denom = alpha_sum_ + static_cast<double>(state_.store_table_total[d]);
    Eigen::VectorXd nu(K);
    for (int k = 0; k < K; ++k) {
        const double n = state_.basket_topic_count[static_cast<std::size_t>(basket) * K + k];
        const double t = state_.basket_table_count[static_cast<std::size_t>(basket) * K + k];
        const double theta_dk =
            (config_.alpha[k] +
             static_cast<double>(state_.store_table_count[static_cast<std::size_t>(d) * K + k])) /
            theta_denom;
        nu[k] = (n - config_.discount * t) / denom +
                theta_dk * (config_.discount * tables + config_.strength) / denom;
    }
    return nu;
}

void BlockGibbsSampler::validate_state() const {
    const int K = n_topics_;
    const std::size_t n_baskets = basket_store_.size();
    std::vector<std::int32_t> bn(n_baskets * K, 0), bt(n_baskets * K, 0);
    std::vector<std::int64_t> sk(static_cast<std::size_t>(n_stores_) * K, 0), st(n_stores_, 0);
    std::vector<std::int64_t> tk(static_cast<std::size_t>(K) * vocab_size_, 0), tt(K, 0);
    for (std::size_t b = 0; b < n_baskets; ++b) {
        for (std::size_t tok = basket_offset_[b]; tok < basket_offset_[b + 1]; ++tok) {
            const int k = state_.topic[tok];
            if (k < 0 || k >= K) throw std::logic_error("topic assignment out of range");
            ++bn[b * K + k];
            if (state_.opens_table[tok]) {
                ++bt[b * K + k];
                ++sk[static_cast<std::size_t>(basket_store_[b]) * K + k];
                ++st[basket_store_[b]];
            }
            ++tk[static_cast<std::size_t>(k) * vocab_size_ + token_word_[tok]];
            ++tt[k];
        }
    }
    for (std::size_t b = 0; b < n_baskets; ++b) {
        std::int32_t tables = 0;
        for (int k = 0; k < K; ++k) {
            const auto n = bn[b * K + k];
            const auto t = bt[b * K + k];
            if (n != state_.basket_topic_count[b * K + k])
                throw std::logic_error("basket topic count mismatch");
            if (t != state_.basket_table_count[b * K + k])
                throw std::logic_error("table count is not the sum of the indicators");
            if (n >= 1 && (t < 1 || t > n))
                throw std::logic_error("table count outside [1, N]");
            if (n == 0 && t != 0) throw std::logic_error("table without tokens");
            tables += t;
        }
        if (tables != state_.basket_table_total[b])
            throw std::logic_error("basket table total mismatch");
    }
    for (std::size_t i = 0; i < sk.size(); ++i)
        if (sk[i] != state_.store_table_count[i]) throw std::logic_error("store table count mismatch");
    for (int d = 0; d < n_stores_; ++d)
        if (st[d] != state_.store_table_total[d]) throw std::logic_error("store table total mismatch");
    if (!fixed_topics_) {
        for (std::size_t i = 0; i < tk.size(); ++i)
            if (tk[i] != state_.term_topic_count[i]) throw std::logic_error("term count mismatch");
        for (int k = 0; k < K; ++k)
            if (tt[k] != state_.topic_token_total[k]) throw std::logic_error("topic total mismatch");
    }
}

void BlockGibbsSampler::force_state(const std::vector<std::int32_t>& topic,
                                    const std::vector<std::uint8_t>& opens_table) {
    if (topic.size() != token_word_.size() || opens_table.size() != token_word_.size())
        throw std::invalid_argument("force_state: wrong token count");
    std::fill(state_.basket_topic_count.begin(), state_.basket_topic_count.end(), 0);
    std::fill(state_.basket_table_count.begin(), state_.basket_table_count.end(), 0);
    std::fill(state_.basket_table_total.begin(), state_.basket_table_total.end(), 0);
    std::fill(state_.store_table_count.begin(), state_.store_table_count.end(), 0);
    std::fill(state_.store_table_total.begin(), state_.store_table_total.end(), 0);
    std::fill(state_.term_topic_count.begin(), state_.term_topic_count.end(), 0);
    std::fill(state_.topic_token_total.begin(), state_.topic_token_total.end(), 0);
    std::size_t b = 0;
    for (std::size_t tok = 0; tok < token_word_.size(); ++tok) {
        while (tok >= basket_offset_[b + 1]) ++b;
        insert_token(tok, static_cast<int>(b), token_word_[tok], topic[tok],
                     opens_table[tok] != 0);
    }
}

SimulationResult simulate(const StmConfig& config, int n_stores, int baskets_per_store,
                          int basket_size, int vocab_size, std::uint64_t seed) {
    StmConfig cfg = config;
    cfg.resolve(vocab_size);
    if (n_stores < 1 || baskets_per_store < 1 || basket_size < 1)
        throw std::invalid_argument("simulate: dimensions must be positive");
    std::mt19937_64 rng(seed);
    const int K = cfg.topics;

    SimulationResult result;
    result.phi.resize(K, vocab_size);
    for (int k = 0; k < K; ++k) result.phi.row(k) = draw_dirichlet(cfg.beta, rng).transpose();
    result.theta.resize(n_stores, K);
    for (int d = 0; d < n_stores; ++d)
        result.theta.row(d) = draw_dirichlet(cfg.alpha, rng).transpose();

    std::vector<std::string> terms(vocab_size);
    for (int v = 0; v < vocab_size; ++v) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "p%05d", v);
        terms[v] = buf;
    }
    result.corpus.vocabulary = Vocabulary::from_terms(std::move(terms));
    result.corpus.min_basket = 1;
    result.corpus.store_ids.resize(n_stores);
    for (int d = 0; d < n_stores; ++d) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "s%04d", d);
        result.corpus.store_ids[d] = buf;
    }

    struct Table {
        int dish;
        int customers;
    };
    std::vector<Table> tables;
    for (int d = 0; d < n_stores; ++d) {
        const Eigen::VectorXd theta_d = result.theta.row(d).transpose();
        for (int p = 0; p < baskets_per_store; ++p) {
            tables.clear();
            Transaction tx;
            tx.store = d;
            tx.split = Split::train;
            for (int i = 0; i < basket_size; ++i) {
                const double total = cfg.strength + static_cast<double>(i);
                const double open_mass =
                    cfg.strength + cfg.discount * static_cast<double>(tables.size());
                double r = draw_uniform(rng) * total;
                int dish;
                if (r < open_mass) {
                    dish = draw_categorical(theta_d, rng);
                    tables.push_back({dish, 1});
                } else {
                    r -= open_mass;
                    std::size_t j = 0;
                    for (; j + 1 < tables.size(); ++j) {
                        const double mass = tables[j].customers - cfg.discount;
                        if (r < mass) break;
                        r -= mass;
                    }
                    dish = tables[j].dish;
                    ++tables[j].customers;
                }
                const int word = draw_categorical(result.phi.row(dish).transpose(), rng);
                tx.items.push_back(word);
                result.topic_of_token.push_back(dish);
            }
            result.corpus.transactions.push_back(std::move(tx));
        }
    }
    return result;
}

namespace {

struct ChainOutput {
    std::vector<PosteriorSampleStm> samples;
    std::vector<Eigen::MatrixXd> theta_samples;
    std::vector<TracePoint> trace;
};

template <typename MakeSampler>
ChainOutput run_one_chain(int chain, const StmConfig& cfg, MakeSampler&& make_sampler,
                          bool keep_phi) {
    ChainOutput out;
    auto sampler = make_sampler(chain);
    sampler->init();
    for (int s = 1; s <= cfg.iters; ++s) {
        sampler->sweep();
        if (s % cfg.trace_every == 0)
            out.trace.push_back({chain, s, sampler->joint_log_prob()});
        if (s >= cfg.burn_in && (s - cfg.burn_in) % cfg.thin == 0) {
            if (keep_phi) {
                out.samples.push_back(
                    {sampler->phi_estimate(), sampler->theta_estimate(), chain, s});
            } else {
                out.theta_samples.push_back(sampler->theta_estimate());
            }
        }
    }
    return out;
}

std::optional<double> trace_rhat(const std::vector<std::vector<TracePoint>>& per_chain,
                                 int burn_in) {
    if (per_chain.size() < 2) return std::nullopt;
    std::vector<std::vector<double>> series;
    std::size_t min_len = std::numeric_limits<std::size_t>::max();
    for (const auto& chain : per_chain) {
        std::vector<double> values;
        for (const auto& point : chain)
            if (point.sweep >= burn_in) values.push_back(point.log_prob);
        min_len = std::min(min_len, values.size());
        series.push_back(std::move(values));
    }
    if (min_len < 10) return std::nullopt;
    for (auto& s : series) s.resize(min_len);
    return rhat(series);
}

}  // namespace

StmFit run_chains(const Corpus& corpus, const StmConfig& config) {
    StmConfig cfg = config;
    cfg.resolve(corpus.vocabulary.size());
    auto stirling = std::make_shared<StirlingCache>(cfg.discount, corpus.max_basket_size() + 1);

    std::vector<ChainOutput> outputs(cfg.chains);
    auto worker = [&](int chain) {
        outputs[chain] = run_one_chain(
            chain, cfg,
            [&](int c) {
                return std::make_unique<BlockGibbsSampler>(corpus, cfg, stirling,
                                                           cfg.seed + static_cast<std::uint64_t>(c));
            },
            /*keep_phi=*/true);
    };
    const int n_threads = cfg.threads > 0 ? std::min(cfg.threads, cfg.chains) : cfg.chains;
    if (n_threads > 1) {
        std::vector<std::thread> pool;
        std::atomic<int> next{0};
        for (int t = 0; t < n_threads; ++t)
            pool.emplace_back([&] {
                for (int c = next++; c < cfg.chains; c = next++) worker(c);
            });
        for (auto& t : pool) t.join();
    } else {
        for (int c = 0; c < cfg.chains; ++c) worker(c);
    }

    StmFit fit;
    fit.config = cfg;
    std::vector<std::vector<TracePoint>> per_chain_trace;
    for (auto& out : outputs) {
        fit.samples.insert(fit.samples.end(), out.samples.begin(), out.samples.end());
        fit.trace.insert(fit.trace.end(), out.trace.begin(), out.trace.end());
        per_chain_trace.push_back(out.trace);
    }
    fit.rhat_log_prob = trace_rhat(per_chain_trace, cfg.burn_in);
    return fit;
}

RefitResult refit_fixed_topics(const Corpus& corpus, const Eigen::MatrixXd& phi_fixed,
                               const StmConfig& config) {
    for (Eigen::Index k = 0; k < phi_fixed.rows(); ++k) {
        const double row_sum = phi_fixed.row(k).sum();
        if (std::abs(row_sum - 1.0) > 1e-6)
            throw std::invalid_argument("refit_fixed_topics: phi rows must sum to 1");
    }
    StmConfig cfg = config;
    cfg.topics = static_cast<int>(phi_fixed.rows());
    cfg.alpha.clear();   // re-derive symmetric 1000/K' unless caller set it
    if (!config.alpha.empty() && static_cast<int>(config.alpha.size()) == cfg.topics)
        cfg.alpha = config.alpha;
    cfg.beta.clear();
    cfg.resolve(corpus.vocabulary.size());

    auto stirling = std::make_shared<StirlingCache>(cfg.discount, corpus.max_basket_size() + 1);
    std::vector<ChainOutput> outputs(cfg.chains);
    auto worker = [&](int chain) {
        outputs[chain] = run_one_chain(
            chain, cfg,
            [&](int c) {
                auto sampler = std::make_unique<BlockGibbsSampler>(
                    corpus, cfg, stirling, cfg.seed + static_cast<std::uint64_t>(c));
                sampler->set_fixed_topics(phi_fixed);
                return sampler;
            },
            /*keep_phi=*/false);
    };
    if (cfg.chains > 1) {
        std::vector<std::thread> pool;
        for (int c = 0; c < cfg.chains; ++c) pool.emplace_back(worker, c);
        for (auto& t : pool) t.join();
    } else {
        worker(0);
    }

    RefitResult result;
    std::vector<std::vector<TracePoint>> per_chain_trace;
    for (auto& out : outputs) {
        result.theta_samples.insert(result.theta_samples.end(), out.theta_samples.begin(),
                                    out.theta_samples.end());
        result.trace.insert(result.trace.end(), out.trace.begin(), out.trace.end());
        per_chain_trace.push_back(out.trace);
    }
    if (result.theta_samples.empty())
        throw std::invalid_argument("refit_fixed_topics: cadence yields no samples");
    result.theta_mean = Eigen::MatrixXd::Zero(corpus.n_stores(), cfg.topics);
    for (const auto& theta : result.theta_samples) result.theta_mean += theta;
    result.theta_mean /= static_cast<double>(result.theta_samples.size());
    result.rhat_log_prob = trace_rhat(per_chain_trace, cfg.burn_in);
    return result;
}

}  // namespace topicmap

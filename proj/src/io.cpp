#include "topicmap/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

namespace topicmap {

using nlohmann::json;

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows) {
    if (!rows.is_array() || rows.empty()) throw std::runtime_error("expected a matrix");
    const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index c = static_cast<Eigen::Index>(rows[0].size());
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        if (static_cast<Eigen::Index>(rows[i].size()) != c)
            throw std::runtime_error("ragged matrix rows");
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows[i][j].get<double>();
    }
    return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

Eigen::VectorXd vector_from_json(const json& arr) {
    Eigen::VectorXd v(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
    return v;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path);
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json doc;
    in >> doc;
    return doc;
}

void expect_format(const json& doc, const std::string& format) {
    if (!doc.contains("format") || doc["format"] != format)
        throw std::runtime_error("unexpected file format, wanted " + format);
}

}  // namespace

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
    json doc;
    doc["format"] = "topicmap-corpus";
    doc["min_basket"] = corpus.min_basket;
    doc["vocabulary"] = corpus.vocabulary.terms;
    doc["stores"] = corpus.store_ids;
    json txs = json::array();
    for (const auto& tx : corpus.transactions) {
        json t;
        t["store"] = tx.store;
        t["items"] = tx.items;
        t["split"] = tx.split == Split::train ? "train" : "test";
        txs.push_back(std::move(t));
    }
    doc["transactions"] = std::move(txs);
    write_text(path, doc.dump(2) + "\n");
}

Corpus load_corpus(const std::string& path) {
    const json doc = read_json(path);
    expect_format(doc, "topicmap-corpus");
    Corpus corpus;
    corpus.min_basket = doc["min_basket"].get<int>();
    corpus.vocabulary = Vocabulary::from_terms(doc["vocabulary"].get<std::vector<std::string>>());
    corpus.store_ids = doc["stores"].get<std::vector<std::string>>();
    for (const auto& t : doc["transactions"]) {
        Transaction tx;
        tx.store = t["store"].get<int>();
        tx.items = t["items"].get<std::vector<std::int32_t>>();
        tx.split = t["split"] == "test" ? Split::test : Split::train;
        corpus.transactions.push_back(std::move(tx));
    }
    corpus.validate();
    return corpus;
}

namespace {

json stm_config_to_json(const StmConfig& cfg) {
    json c;
    c["topics"] = cfg.topics;
    c["alpha"] = cfg.alpha;
    c["beta"] = cfg.beta;
    c["discount"] = cfg.discount;
    c["strength"] = cfg.strength;
    c["iters"] = cfg.iters;
    c["burn_in"] = cfg.burn_in;
    c["thin"] = cfg.thin;
    c["chains"] = cfg.chains;
    c["trace_every"] = cfg.trace_every;
    c["seed"] = cfg.seed;
    return c;
}

StmConfig stm_config_from_json(const json& c) {
    StmConfig cfg;
    cfg.topics = c["topics"].get<int>();
    cfg.alpha = c["alpha"].get<std::vector<double>>();
    cfg.beta = c["beta"].get<std::vector<double>>();
    cfg.discount = c["discount"].get<double>();
    cfg.strength = c["strength"].get<double>();
    cfg.iters = c["iters"].get<int>();
    cfg.burn_in = c["burn_in"].get<int>();
    cfg.thin = c["thin"].get<int>();
    cfg.chains = c["chains"].get<int>();
    cfg.trace_every = c["trace_every"].get<int>();
    cfg.seed = c["seed"].get<std::uint64_t>();
    return cfg;
}

json trace_to_json(const std::vector<TracePoint>& trace) {
    json out = json::array();
    for (const auto& p : trace) out.push_back({p.chain, p.sweep, p.log_prob});
    return out;
}

std::vector<TracePoint> trace_from_json(const json& arr) {
    std::vector<TracePoint> trace;
    for (const auto& p : arr)
        trace.push_back({p[0].get<int>(), p[1].get<int>(), p[2].get<double>()});
    return trace;
}

}  // namespace

void save_stm_fit(const StmFit& fit, const std::string& path) {
    json doc;
    doc["format"] = "topicmap-stm-samples";
    doc["config"] = stm_config_to_json(fit.config);
    json samples = json::array();
    for (const auto& s : fit.samples) {
        json entry;
        entry["chain"] = s.chain;
        entry["sweep"] = s.sweep;
        entry["phi"] = matrix_to_json(s.phi);
        entry["theta"] = matrix_to_json(s.theta);
        samples.push_back(std::move(entry));
    }
    doc["samples"] = std::move(samples);
    doc["trace"] = trace_to_json(fit.trace);
    if (fit.rhat_log_prob)
        doc["rhat_log_prob"] = *fit.rhat_log_prob;
    else
        doc["rhat_log_prob"] = nullptr;
    write_text(path, doc.dump() + "\n");
}

StmFit load_stm_fit(const std::string& path) {
    const json doc = read_json(path);
    expect_format(doc, "topicmap-stm-samples");
    StmFit fit;
    fit.config = stm_config_from_json(doc["config"]);
    for (const auto& entry : doc["samples"]) {
        PosteriorSampleStm s;
        s.chain = entry["chain"].get<int>();
        s.sweep = entry["sweep"].get<int>();
        s.phi = matrix_from_json(entry["phi"]);
        s.theta = matrix_from_json(entry["theta"]);
        fit.samples.push_back(std::move(s));
    }
    fit.trace = trace_from_json(doc["trace"]);
    if (!doc["rhat_log_prob"].is_null()) fit.rhat_log_prob = doc["rhat_log_prob"].get<double>();
    return fit;
}

void save_clusters(const std::vector<ClusteredTopic>& clusters, double threshold,
                   const std::string& path) {
    json doc;
    doc["format"] = "topicmap-clusters";
    doc["threshold"] = threshold;
    json arr = json::array();
    for (const auto& c : clusters) {
        json entry;
        entry["mean"] = vector_to_json(c.mean);
        entry["size"] = c.size;
        entry["members"] = c.members;
        entry["samples"] = std::vector<int>(c.samples.begin(), c.samples.end());
        arr.push_back(std::move(entry));
    }
    doc["clusters"] = std::move(arr);
    write_text(path, doc.dump() + "\n");
}

std::vector<ClusteredTopic> load_clusters(const std::string& path) {
    const json doc = read_json(path);
    expect_format(doc, "topicmap-clusters");
    std::vector<ClusteredTopic> clusters;
    for (const auto& entry : doc["clusters"]) {
        ClusteredTopic c;
        c.mean = vector_from_json(entry["mean"]);
        c.size = entry["size"].get<int>();
        c.members = entry["members"].get<std::vector<int>>();
        for (const auto& s : entry["samples"]) c.samples.insert(s.get<int>());
        clusters.push_back(std::move(c));
    }
    return clusters;
}

void save_refit(const RefitResult& refit, const std::vector<std::string>& store_ids,
                const std::string& path) {
    json doc;
    doc["format"] = "topicmap-refit";
    doc["store_ids"] = store_ids;
    doc["theta_mean"] = matrix_to_json(refit.theta_mean);
    json samples = json::array();
    for (const auto& theta : refit.theta_samples) samples.push_back(matrix_to_json(theta));
    doc["theta_samples"] = std::move(samples);
    doc["trace"] = trace_to_json(refit.trace);
    if (refit.rhat_log_prob)
        doc["rhat_log_prob"] = *refit.rhat_log_prob;
    else
        doc["rhat_log_prob"] = nullptr;
    write_text(path, doc.dump() + "\n");
}

Eigen::MatrixXd load_theta_mean(const std::string& path, std::vector<std::string>* store_ids) {
    const json doc = read_json(path);
    expect_format(doc, "topicmap-refit");
    if (store_ids) *store_ids = doc["store_ids"].get<std::vector<std::string>>();
    return matrix_from_json(doc["theta_mean"]);
}

void save_gp_draws(const GPDraws& draws, const std::string& path) {
    json doc;
    doc["format"] = "topicmap-gp-draws";
    doc["gp_enabled"] = draws.gp_enabled;
    json arr = json::array();
    for (std::size_t i = 0; i < draws.draws.size(); ++i) {
        const auto& d = draws.draws[i];
        json entry;
        entry["beta"] = vector_to_json(d.beta);
        entry["amplitude"] = d.amplitude;
        entry["length_scale"] = d.length_scale;
        entry["sigma"] = d.sigma;
        entry["chain"] = draws.chain[i];
        entry["log_post"] = draws.log_post[i];
        arr.push_back(std::move(entry));
    }
    doc["draws"] = std::move(arr);
    doc["rhat"] = draws.rhat;
    write_text(path, doc.dump() + "\n");
}

GPDraws load_gp_draws(const std::string& path) {
    const json doc = read_json(path);
    expect_format(doc, "topicmap-gp-draws");
    GPDraws draws;
    draws.gp_enabled = doc["gp_enabled"].get<bool>();
    for (const auto& entry : doc["draws"]) {
        GPParams d;
        d.beta = vector_from_json(entry["beta"]);
        d.amplitude = entry["amplitude"].get<double>();
        d.length_scale = entry["length_scale"].get<double>();
        d.sigma = entry["sigma"].get<double>();
        draws.draws.push_back(std::move(d));
        draws.chain.push_back(entry["chain"].get<int>());
        draws.log_post.push_back(entry["log_post"].get<double>());
    }
    if (doc.contains("rhat"))
        for (const auto& [key, value] : doc["rhat"].items())
            draws.rhat[key] = value.get<double>();
    return draws;
}

void save_grid_csv(const std::vector<GridRow>& rows, const std::string& path) {
    std::ostringstream out;
    out << "threshold,min_size,n_clusters,perplexity,mean_npmi,mean_distinctiveness,"
           "mean_credibility\n";
    for (const auto& r : rows)
        out << format_double(r.threshold) << ',' << r.min_size << ',' << r.n_clusters << ','
            << format_double(r.perplexity) << ',' << format_double(r.mean_npmi) << ','
            << format_double(r.mean_distinctiveness) << ',' << format_double(r.mean_credibility)
            << '\n';
    write_text(path, out.str());
}

namespace {

double quantile(std::vector<double> sorted, double q) {
    std::sort(sorted.begin(), sorted.end());
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

void summary_row(std::ostringstream& out, const std::string& name, std::vector<double> values) {
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var = n > 1 ? var / (n - 1.0) : 0.0;
    out << name << ',' << format_double(mean) << ',' << format_double(std::sqrt(var)) << ','
        << format_double(quantile(values, 0.025)) << ',' << format_double(quantile(values, 0.975))
        << '\n';
}

}  // namespace

void save_coefficient_csv(const GPDraws& draws, const std::string& path) {
    if (draws.draws.empty()) throw std::invalid_argument("save_coefficient_csv: no draws");
    const Eigen::Index p = draws.draws.front().beta.size();
    std::ostringstream out;
    out << "parameter,mean,se,ci_lower,ci_upper\n";
    for (Eigen::Index j = 0; j < p; ++j) {
        std::string name;
        if (p == kNumRegions)
            name = j == 0 ? "Intercept" : region_name(coefficient_regions()[j - 1]);
        else
            name = "beta_" + std::to_string(j);
        std::vector<double> values;
        for (const auto& d : draws.draws) values.push_back(d.beta[j]);
        summary_row(out, name, std::move(values));
    }
    if (draws.gp_enabled) {
        std::vector<double> rho, amp;
        for (const auto& d : draws.draws) {
            rho.push_back(d.length_scale);
            amp.push_back(d.amplitude);
        }
        summary_row(out, "length_scale", std::move(rho));
        summary_row(out, "amplitude", std::move(amp));
    }
    std::vector<double> sigma;
    for (const auto& d : draws.draws) sigma.push_back(d.sigma);
    summary_row(out, "sigma", std::move(sigma));
    write_text(path, out.str());
}

void save_comparison_csv(const std::vector<std::pair<std::string, ComparisonResult>>& rows,
                         const std::string& path) {
    std::ostringstream out;
    out << "topic,lr_mse,lr_mse_se,lgpr_mse,lgpr_mse_se,p_mse,"
           "lr_lppd,lr_lppd_se,lgpr_lppd,lgpr_lppd_se,p_lppd\n";
    for (const auto& [topic, r] : rows) {
        // convention: model A = LGPR, model B = LR
        out << topic << ',' << format_double(r.mse_b) << ',' << format_double(r.mse_se_b) << ','
            << format_double(r.mse_a) << ',' << format_double(r.mse_se_a) << ','
            << format_double(r.p_mse) << ',' << format_double(r.lppd_b) << ','
            << format_double(r.lppd_se_b) << ',' << format_double(r.lppd_a) << ','
            << format_double(r.lppd_se_a) << ',' << format_double(r.p_lppd) << '\n';
    }
    write_text(path, out.str());
}

void save_residual_csv(const GPDataset& data, const std::vector<StoreGeo>& stores,
                       const Decomposition& decomposition, const std::string& path) {
    if (static_cast<Eigen::Index>(stores.size()) != data.y.size())
        throw std::invalid_argument("save_residual_csv: store count mismatch");
    std::ostringstream out;
    out << "store_id,lat,lon,observed,fixed,spatial,noise\n";
    for (Eigen::Index i = 0; i < data.y.size(); ++i) {
        out << stores[i].store_id << ',' << format_double(stores[i].lat) << ','
            << format_double(stores[i].lon) << ',' << format_double(data.y[i]) << ','
            << format_double(decomposition.fixed[i]) << ','
            << format_double(decomposition.spatial[i]) << ','
            << format_double(decomposition.noise[i]) << '\n';
    }
    write_text(path, out.str());
}

void save_values_csv(const std::vector<std::pair<std::string, double>>& values,
                     const std::string& header_value_name, const std::string& path) {
    std::ostringstream out;
    out << "store_id," << header_value_name << '\n';
    for (const auto& [id, value] : values) out << id << ',' << format_double(value) << '\n';
    write_text(path, out.str());
}

std::vector<std::pair<std::string, double>> load_values_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::pair<std::string, double>> values;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineno == 1 || line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error("values csv line " + std::to_string(lineno) + ": bad row");
        values.emplace_back(line.substr(0, comma), std::stod(line.substr(comma + 1)));
    }
    return values;
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw std::runtime_error("EVP_MD_CTX_new failed");
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 16];
    while (in.good()) {
        in.read(buf, sizeof(buf));
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

}  // namespace topicmap

#include "topicmap/geo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace topicmap {

namespace {

const std::vector<std::pair<Region, std::string>>& region_table() {
    static const std::vector<std::pair<Region, std::string>> table = {
        {Region::london, "London"},
        {Region::northern_ireland, "Northern Ireland"},
        {Region::scotland, "Scotland"},
        {Region::wales, "Wales"},
        {Region::north_west, "North West"},
        {Region::north_east, "North East"},
        {Region::yorkshire_humber, "Yorkshire and the Humber"},
        {Region::west_midlands, "West Midlands"},
        {Region::east_midlands, "East Midlands"},
        {Region::east_anglia, "East Anglia"},
        {Region::south_east, "South East"},
        {Region::south_west, "South West"},
    };
    return table;
}

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace

Region parse_region(const std::string& name) {
    for (const auto& [region, label] : region_table())
        if (label == name) return region;
    throw std::invalid_argument("unknown region: " + name);
}

const std::string& region_name(Region region) {
    for (const auto& [r, label] : region_table())
        if (r == region) return label;
    throw std::invalid_argument("invalid region value");
}

const std::vector<Region>& coefficient_regions() {
    static const std::vector<Region> order = {
        Region::northern_ireland, Region::scotland,      Region::wales,
        Region::north_west,       Region::north_east,    Region::yorkshire_humber,
        Region::west_midlands,    Region::east_midlands, Region::east_anglia,
        Region::south_east,       Region::south_west,
    };
    return order;
}

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
    const double phi1 = deg2rad(lat1), phi2 = deg2rad(lat2);
    const double dphi = phi2 - phi1;
    const double dlambda = deg2rad(lon2 - lon1);
    const double a = std::sin(dphi / 2) * std::sin(dphi / 2) +
                     std::cos(phi1) * std::cos(phi2) * std::sin(dlambda / 2) * std::sin(dlambda / 2);
    return kEarthRadiusKm * 2.0 * std::asin(std::min(1.0, std::sqrt(a)));
}

double haversine_km(const StoreGeo& p, const StoreGeo& q) {
    return haversine_km(p.lat, p.lon, q.lat, q.lon);
}

double logit(double p) {
    constexpr double eps = 1e-9;
    p = std::clamp(p, eps, 1.0 - eps);
    return std::log(p / (1.0 - p));
}

double inv_logit(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Eigen::MatrixXd design_matrix(const std::vector<StoreGeo>& stores) {
    const auto& order = coefficient_regions();
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(stores.size(), kNumRegions);
    for (std::size_t i = 0; i < stores.size(); ++i) {
        x(static_cast<Eigen::Index>(i), 0) = 1.0;
        for (std::size_t j = 0; j < order.size(); ++j)
            if (stores[i].region == order[j]) x(static_cast<Eigen::Index>(i), j + 1) = 1.0;
    }
    return x;
}

Eigen::MatrixXd distance_matrix(const std::vector<StoreGeo>& stores) {
    const Eigen::Index n = static_cast<Eigen::Index>(stores.size());
    Eigen::MatrixXd dist = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double d = haversine_km(stores[i], stores[j]);
            dist(i, j) = d;
            dist(j, i) = d;
        }
    return dist;
}

Eigen::MatrixXd cross_distance_matrix(const std::vector<StoreGeo>& a,
                                      const std::vector<StoreGeo>& b) {
    Eigen::MatrixXd dist(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j)
            dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                haversine_km(a[i], b[j]);
    return dist;
}

std::vector<StoreGeo> load_stores_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<StoreGeo> stores;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineno == 1 || line.empty()) continue;   // header
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 5)
            throw std::runtime_error("stores csv line " + std::to_string(lineno) +
                                     ": expected store_id,postcode,lat,lon,region");
        StoreGeo store;
        store.store_id = fields[0];
        store.postcode = fields[1];
        try {
            store.lat = std::stod(fields[2]);
            store.lon = std::stod(fields[3]);
        } catch (const std::exception&) {
            throw std::runtime_error("stores csv line " + std::to_string(lineno) +
                                     ": bad coordinates");
        }
        if (store.lat < -90.0 || store.lat > 90.0 || store.lon < -180.0 || store.lon > 180.0)
            throw std::runtime_error("stores csv line " + std::to_string(lineno) +
                                     ": coordinates out of range");
        store.region = parse_region(fields[4]);
        stores.push_back(std::move(store));
    }
    return stores;
}

}  // namespace topicmap

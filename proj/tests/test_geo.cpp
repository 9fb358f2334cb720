#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "topicmap/geo.hpp"

using namespace topicmap;

namespace {

/// Independent spherical-law-of-cosines oracle.
double slc_km(double lat1, double lon1, double lat2, double lon2) {
    const double d2r = std::numbers::pi / 180.0;
    const double c = std::sin(lat1 * d2r) * std::sin(lat2 * d2r) +
                     std::cos(lat1 * d2r) * std::cos(lat2 * d2r) * std::cos((lon2 - lon1) * d2r);
    return kEarthRadiusKm * std::acos(std::clamp(c, -1.0, 1.0));
}

}  // namespace

TEST_CASE("haversine: identity, antipodes and the London-Edinburgh cross-check") {
    CHECK(haversine_km(51.5, -0.12, 51.5, -0.12) == doctest::Approx(0.0));
    CHECK(haversine_km(0.0, 0.0, 0.0, 180.0) ==
          doctest::Approx(std::numbers::pi * kEarthRadiusKm).epsilon(1e-9));
    const double got = haversine_km(51.5074, -0.1278, 55.9533, -3.1883);
    CHECK(std::abs(got - slc_km(51.5074, -0.1278, 55.9533, -3.1883)) < 0.1);
    CHECK(got == doctest::Approx(534.0).epsilon(0.01));   // ~534 km
}

TEST_CASE("haversine is symmetric and satisfies the triangle inequality") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> lat(-90.0, 90.0), lon(-180.0, 180.0);
    for (int trial = 0; trial < 10000; ++trial) {
        const double a[2] = {lat(rng), lon(rng)};
        const double b[2] = {lat(rng), lon(rng)};
        const double c[2] = {lat(rng), lon(rng)};
        const double ab = haversine_km(a[0], a[1], b[0], b[1]);
        const double ba = haversine_km(b[0], b[1], a[0], a[1]);
        const double bc = haversine_km(b[0], b[1], c[0], c[1]);
        const double ac = haversine_km(a[0], a[1], c[0], c[1]);
        CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
        CHECK(ac <= ab + bc + 1e-6);
    }
}

TEST_CASE("logit and inverse") {
    CHECK(logit(0.5) == doctest::Approx(0.0));
    CHECK(inv_logit(0.0) == doctest::Approx(0.5));
    CHECK(logit(0.1) == doctest::Approx(-2.19722).epsilon(1e-5));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> p_dist(1e-6, 1.0 - 1e-6);
    for (int i = 0; i < 1000; ++i) {
        const double p = p_dist(rng);
        CHECK(std::abs(inv_logit(logit(p)) - p) < 1e-12);
    }
    // clamping keeps the transform finite at the boundary
    CHECK(std::isfinite(logit(0.0)));
    CHECK(std::isfinite(logit(1.0)));
}

TEST_CASE("design matrix: intercept plus one-hot regions, row sums in {1, 2}") {
    std::vector<StoreGeo> stores;
    for (int i = 0; i < kNumRegions; ++i) {
        StoreGeo s;
        s.store_id = "s" + std::to_string(i);
        s.lat = 52.0;
        s.lon = -1.0;
        s.region = static_cast<Region>(i);
        stores.push_back(s);
    }
    const Eigen::MatrixXd x = design_matrix(stores);
    REQUIRE(x.rows() == kNumRegions);
    REQUIRE(x.cols() == kNumRegions);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        CHECK(x(i, 0) == 1.0);
        const double row_sum = x.row(i).sum();
        CHECK((row_sum == 1.0 || row_sum == 2.0));
        if (stores[i].region == Region::london) CHECK(row_sum == 1.0);
    }
    // a Scottish store lights up exactly the Scotland column
    StoreGeo scot;
    scot.region = Region::scotland;
    const Eigen::MatrixXd xs = design_matrix({scot});
    int nonzero = 0;
    for (Eigen::Index j = 1; j < xs.cols(); ++j)
        if (xs(0, j) != 0.0) {
            ++nonzero;
            CHECK(coefficient_regions()[j - 1] == Region::scotland);
        }
    CHECK(nonzero == 1);
}

TEST_CASE("region names round-trip; unknown labels are rejected") {
    for (int i = 0; i < kNumRegions; ++i) {
        const Region r = static_cast<Region>(i);
        CHECK(parse_region(region_name(r)) == r);
    }
    CHECK_THROWS_AS(parse_region("Narnia"), std::invalid_argument);
    CHECK(coefficient_regions().size() == kNumRegions - 1);   // London is the reference
}

TEST_CASE("stores csv loading validates coordinates and regions") {
    const std::string path = "/tmp/topicmap_stores.csv";
    {
        std::ofstream out(path);
        out << "store_id,postcode,lat,lon,region\n";
        out << "s1,AB1 2CD,55.95,-3.19,Scotland\n";
        out << "s2,,51.51,-0.13,London\n";
    }
    const auto stores = load_stores_csv(path);
    REQUIRE(stores.size() == 2);
    CHECK(stores[0].store_id == "s1");
    CHECK(stores[0].region == Region::scotland);
    CHECK(stores[1].postcode.empty());
    {
        std::ofstream out(path);
        out << "store_id,postcode,lat,lon,region\n";
        out << "s1,,99.0,0.0,London\n";   // latitude out of range
    }
    CHECK_THROWS_AS(load_stores_csv(path), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("distance matrices are symmetric with zero diagonal") {
    std::vector<StoreGeo> stores(3);
    stores[0].lat = 51.5; stores[0].lon = -0.1;
    stores[1].lat = 55.9; stores[1].lon = -3.2;
    stores[2].lat = 53.4; stores[2].lon = -2.9;
    const Eigen::MatrixXd d = distance_matrix(stores);
    for (int i = 0; i < 3; ++i) {
        CHECK(d(i, i) == 0.0);
        for (int j = 0; j < 3; ++j) CHECK(d(i, j) == d(j, i));
    }
    const Eigen::MatrixXd cross = cross_distance_matrix({stores[0]}, stores);
    CHECK(cross(0, 0) == 0.0);
    CHECK(cross(0, 1) == doctest::Approx(d(0, 1)));
}

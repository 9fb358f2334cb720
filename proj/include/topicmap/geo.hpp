#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace topicmap {

inline constexpr double kEarthRadiusKm = 6371.0;

/// UK constituent countries and English regions; London is the reference
/// category of the regression design.
enum class Region {
    london,
    northern_ireland,
    scotland,
    wales,
    north_west,
    north_east,
    yorkshire_humber,
    west_midlands,
    east_midlands,
    east_anglia,
    south_east,
    south_west,
};

inline constexpr int kNumRegions = 12;

Region parse_region(const std::string& name);
const std::string& region_name(Region region);

/// Non-reference regions in the order their coefficients are reported.
const std::vector<Region>& coefficient_regions();

struct StoreGeo {
    std::string store_id;
    std::string postcode;   // reserved; coordinates are supplied directly
    double lat = 0.0;
    double lon = 0.0;
    Region region = Region::london;
};

double haversine_km(double lat1, double lon1, double lat2, double lon2);
double haversine_km(const StoreGeo& p, const StoreGeo& q);

/// log(p / (1-p)) with inputs clamped to [1e-9, 1 - 1e-9].
double logit(double p);
double inv_logit(double x);

/// n x 12 design: intercept column plus one-hot columns for the 11
/// non-reference regions in coefficient_regions() order.
Eigen::MatrixXd design_matrix(const std::vector<StoreGeo>& stores);

Eigen::MatrixXd distance_matrix(const std::vector<StoreGeo>& stores);
Eigen::MatrixXd cross_distance_matrix(const std::vector<StoreGeo>& a,
                                      const std::vector<StoreGeo>& b);

/// Reads `store_id,postcode,lat,lon,region` with a header line.
std::vector<StoreGeo> load_stores_csv(const std::string& path);

}  // namespace topicmap

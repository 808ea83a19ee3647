///   @file features.hpp
///   @brief Bank of image transforms used as voxel features by the forest.
///
/// Feature order (part of the serialized model contract):
///   1. Gaussian blur, one per `gaussian` sigma
///   2. Laplacian of Gaussian, one per `laplacian` sigma
///   3. Gaussian gradient magnitude, one per `gradient_magnitude` sigma
///   4. difference of Gaussians G(s1) - G(s2), one per `difference` pair
///   5. per `hessian` sigma: h_xx h_xy h_xz h_yy h_yz h_zz l1 l2 l3
///   6. per `structure_tensor` sigma: the three sorted tensor eigenvalues

#ifndef CRACKSEG_FEATURES_HPP
#define CRACKSEG_FEATURES_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "convolution.hpp"
#include "errors.hpp"
#include "hessian.hpp"
#include "volume.hpp"

namespace crackseg {

struct FeatureBankConfig {
  std::vector<double> gaussian;
  std::vector<double> laplacian;
  std::vector<double> gradient_magnitude;
  std::vector<std::pair<double, double>> difference;
  std::vector<double> hessian;
  std::vector<double> structure_tensor;
  ScaleNormalization hessian_normalization = ScaleNormalization::linear;

  std::size_t feature_count() const {
    return gaussian.size() + laplacian.size() + gradient_magnitude.size() + difference.size() +
           9 * hessian.size() + 3 * structure_tensor.size();
  }

  void validate() const {
    auto check = [](double s) {
      if (!std::isfinite(s) || s < 0.5) throw ParameterError("feature sigma must be >= 0.5, got " + std::to_string(s));
    };
    for (double s : gaussian) check(s);
    for (double s : laplacian) check(s);
    for (double s : gradient_magnitude) check(s);
    for (auto [a, b] : difference) check(a), check(b);
    for (double s : hessian) check(s);
    for (double s : structure_tensor) check(s);
  }

  friend bool operator==(const FeatureBankConfig&, const FeatureBankConfig&) = default;
};

/// The transform set that trained well for width-3 cracks: 60 features.
inline FeatureBankConfig default_bank() {
  FeatureBankConfig c;
  c.gaussian = {0.5, 0.75, 1.0, 1.5, 2.5, 3.5, 5.0};
  c.laplacian = {0.5, 1.0, 1.5, 2.5, 3.5, 5.0};
  c.gradient_magnitude = {0.5, 1.0, 1.5, 2.5, 3.5, 5.0};
  c.difference = {{1.0, 0.75}, {1.5, 1.0}, {2.5, 1.5}, {3.5, 2.5}, {5.0, 3.5}};
  c.hessian = {0.5, 0.75, 1.0};
  c.structure_tensor = {0.5, 0.75, 1.0};
  return c;
}

inline std::string format_sigma(double s) {
  std::ostringstream os;
  os << s;
  return os.str();
}

inline std::vector<std::string> feature_names(const FeatureBankConfig& c) {
  std::vector<std::string> names;
  for (double s : c.gaussian) names.push_back("gaussian(" + format_sigma(s) + ")");
  for (double s : c.laplacian) names.push_back("laplacian(" + format_sigma(s) + ")");
  for (double s : c.gradient_magnitude) names.push_back("gradient_magnitude(" + format_sigma(s) + ")");
  for (auto [a, b] : c.difference) names.push_back("difference(" + format_sigma(a) + "," + format_sigma(b) + ")");
  static const char* hess[] = {"h_xx", "h_xy", "h_xz", "h_yy", "h_yz", "h_zz", "l1", "l2", "l3"};
  for (double s : c.hessian)
    for (auto* h : hess) names.push_back(std::string("hessian_") + h + "(" + format_sigma(s) + ")");
  for (double s : c.structure_tensor)
    for (int k = 1; k <= 3; ++k) names.push_back("structure_l" + std::to_string(k) + "(" + format_sigma(s) + ")");
  return names;
}

inline const char* normalization_name(ScaleNormalization n) {
  switch (n) {
    case ScaleNormalization::linear: return "sigma";
    case ScaleNormalization::quadratic: return "sigma^2";
    case ScaleNormalization::none: return "none";
  }
  return "sigma";
}

inline ScaleNormalization parse_normalization(const std::string& s) {
  if (s == "sigma") return ScaleNormalization::linear;
  if (s == "sigma^2") return ScaleNormalization::quadratic;
  if (s == "none") return ScaleNormalization::none;
  throw ConfigError("unknown hessian normalization '" + s + "'");
}

inline nlohmann::ordered_json to_json(const FeatureBankConfig& c) {
  nlohmann::ordered_json j;
  j["gaussian"] = c.gaussian;
  j["laplacian"] = c.laplacian;
  j["gradient_magnitude"] = c.gradient_magnitude;
  auto pairs = nlohmann::ordered_json::array();
  for (auto [a, b] : c.difference) pairs.push_back({a, b});
  j["difference"] = pairs;
  j["hessian"] = c.hessian;
  j["structure_tensor"] = c.structure_tensor;
  j["hessian_normalization"] = normalization_name(c.hessian_normalization);
  return j;
}

template <class Json>
FeatureBankConfig feature_bank_from_json(const Json& j) {
  FeatureBankConfig c;
  try {
    c.gaussian = j.value("gaussian", std::vector<double>{});
    c.laplacian = j.value("laplacian", std::vector<double>{});
    c.gradient_magnitude = j.value("gradient_magnitude", std::vector<double>{});
    if (j.contains("difference"))
      for (const auto& p : j.at("difference")) c.difference.emplace_back(p.at(0).template get<double>(), p.at(1).template get<double>());
    c.hessian = j.value("hessian", std::vector<double>{});
    c.structure_tensor = j.value("structure_tensor", std::vector<double>{});
    c.hessian_normalization = parse_normalization(j.value("hessian_normalization", std::string("sigma")));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("feature bank: ") + e.what());
  }
  c.validate();
  return c;
}

/// Feature volumes with their names, in bank order.
struct FeatureStack {
  std::vector<std::string> names;
  std::vector<Volume> volumes;
  std::size_t size() const { return volumes.size(); }
};

namespace detail {

inline Volume subtract(const Volume& a, const Volume& b) {
  Volume out(a.dims());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

}  // namespace detail

/// Laplacian of Gaussian (unnormalized).
inline Volume laplacian_of_gaussian(const Volume& vol, double sigma) {
  const Kernel1D k0 = gaussian_kernel(sigma, 0), k2 = gaussian_kernel(sigma, 2);
  Volume out = separable_convolve(vol, k2, k0, k0);
  const Volume yy = separable_convolve(vol, k0, k2, k0);
  const Volume zz = separable_convolve(vol, k0, k0, k2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += yy[i] + zz[i];
  return out;
}

/// Euclidean norm of the Gaussian gradient.
inline Volume gradient_magnitude(const Volume& vol, double sigma) {
  const Kernel1D k0 = gaussian_kernel(sigma, 0), k1 = gaussian_kernel(sigma, 1);
  Volume gx = separable_convolve(vol, k1, k0, k0);
  const Volume gy = separable_convolve(vol, k0, k1, k0);
  const Volume gz = separable_convolve(vol, k0, k0, k1);
  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = std::sqrt(gx[i] * gx[i] + gy[i] * gy[i] + gz[i] * gz[i]);
  return gx;
}

/// Sorted eigenvalues of the structure tensor: products of Gaussian
/// gradients at `sigma`, smoothed with a Gaussian of the same `sigma`.
inline std::array<Volume, 3> structure_tensor_eigenvalues(const Volume& vol, double sigma) {
  const Kernel1D k0 = gaussian_kernel(sigma, 0), k1 = gaussian_kernel(sigma, 1);
  const std::array<Volume, 3> g = {separable_convolve(vol, k1, k0, k0), separable_convolve(vol, k0, k1, k0),
                                   separable_convolve(vol, k0, k0, k1)};
  HessianField tensor;
  tensor.sigma = sigma;
  tensor.dims = vol.dims();
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) {
      Volume prod(vol.dims());
      for (std::size_t v = 0; v < prod.size(); ++v) prod[v] = g[i][v] * g[j][v];
      tensor.h(i, j) = gaussian_blur(prod, sigma);
    }
  EigenField ef = eigenvalues3(tensor);
  return std::move(ef.lambda);
}

/// Number of planes beyond a slab that the bank reads along each axis: one
/// kernel radius per feature, two for the structure tensor (gradient, then
/// smoothing). Features of the inner planes of a slab padded by this many
/// planes equal those of the whole volume.
inline std::size_t feature_halo(const FeatureBankConfig& c) {
  int h = 0;
  for (const auto* v : {&c.gaussian, &c.laplacian, &c.gradient_magnitude, &c.hessian})
    for (double s : *v) h = std::max(h, gaussian_radius(s));
  for (auto [a, b] : c.difference) h = std::max({h, gaussian_radius(a), gaussian_radius(b)});
  for (double s : c.structure_tensor) h = std::max(h, 2 * gaussian_radius(s));
  return std::size_t(h);
}

/// Computes the full bank in the documented order.
inline FeatureStack feature_bank(const Volume& vol, const FeatureBankConfig& config) {
  config.validate();
  FeatureStack fs;
  fs.names = feature_names(config);
  std::map<double, Volume> blurred;
  auto blur = [&](double s) -> const Volume& {
    auto it = blurred.find(s);
    if (it == blurred.end()) it = blurred.emplace(s, gaussian_blur(vol, s)).first;
    return it->second;
  };
  for (double s : config.gaussian) fs.volumes.push_back(blur(s));
  for (double s : config.laplacian) fs.volumes.push_back(laplacian_of_gaussian(vol, s));
  for (double s : config.gradient_magnitude) fs.volumes.push_back(gradient_magnitude(vol, s));
  for (auto [a, b] : config.difference) fs.volumes.push_back(detail::subtract(blur(a), blur(b)));
  blurred.clear();
  for (double s : config.hessian) {
    HessianField h = hessian(vol, s, config.hessian_normalization);
    EigenField ef = eigenvalues3(h);
    for (auto& e : h.entries) fs.volumes.push_back(std::move(e));
    for (auto& l : ef.lambda) fs.volumes.push_back(std::move(l));
  }
  for (double s : config.structure_tensor)
    for (auto& l : structure_tensor_eigenvalues(vol, s)) fs.volumes.push_back(std::move(l));
  return fs;
}

}  // namespace crackseg

#endif  // CRACKSEG_FEATURES_HPP

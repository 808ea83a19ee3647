///   @file forest.hpp
///   @brief Random forest voxel classifier over the feature bank.
///
/// Trees are CART with Gini impurity, grown on a bootstrap sample of the
/// training rows with floor(sqrt(d)) candidate features per split; a row goes
/// left when feature <= threshold. A voxel is crack when strictly more than
/// half of the trees vote for it.
///
/// Binary file layout (little-endian):
///   "CRKFOREST1\n"
///   u64 header length, header JSON (bank, metadata, tree count)
///   per tree: u32 node count, then per node
///             i32 feature (-1 for leaves), f32 threshold, i32 left, i32 right, u8 class

#ifndef CRACKSEG_FOREST_HPP
#define CRACKSEG_FOREST_HPP

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "features.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "volume.hpp"

namespace crackseg {

struct TrainingSet {
  std::vector<std::string> feature_names;
  std::size_t dim = 0;
  std::vector<float> rows;  ///< row-major, rows x dim
  std::vector<std::uint8_t> labels;
  std::size_t crack_count = 0, background_count = 0;

  std::size_t size() const { return labels.size(); }
  const float* row(std::size_t r) const { return rows.data() + r * dim; }
};

struct SamplingParams {
  std::size_t crack_cap = 2000;  ///< per training pair
  double background_ratio = 3.0;
  std::uint64_t seed = 0;
};

struct LabeledVolume {
  Volume gray;
  BinaryMask truth;
};

namespace detail {

// First k entries of a seeded Fisher-Yates shuffle, returned sorted.
inline std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool, std::size_t k, Rng& rng) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> u(i, pool.size() - 1);
    std::swap(pool[i], pool[u(rng)]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace detail

/// Samples up to crack_cap crack voxels per pair and ratio times as many
/// background voxels, uniformly without replacement.
inline TrainingSet assemble_training(const std::vector<LabeledVolume>& pairs, const FeatureBankConfig& bank,
                                     const SamplingParams& sp) {
  bank.validate();
  if (pairs.empty()) throw TrainingError("no training pairs");
  if (!(sp.background_ratio >= 0.0)) throw ParameterError("background ratio must be non-negative");
  TrainingSet ts;
  ts.feature_names = feature_names(bank);
  ts.dim = ts.feature_names.size();
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& [gray, truth] = pairs[k];
    require_same_dims(gray.dims(), truth.dims(), "training pair");
    std::vector<std::size_t> crack, background;
    for (std::size_t i = 0; i < truth.size(); ++i) (truth.get(i) ? crack : background).push_back(i);
    if (crack.empty()) continue;
    Rng rng(derive_seed(sp.seed, {k}));
    const auto c = detail::sample_without_replacement(std::move(crack), sp.crack_cap, rng);
    const auto b = detail::sample_without_replacement(
        std::move(background), std::size_t(std::llround(sp.background_ratio * double(c.size()))), rng);
    const FeatureStack fs = feature_bank(gray, bank);
    for (const auto* set : {&c, &b})
      for (std::size_t i : *set) {
        for (const Volume& f : fs.volumes) ts.rows.push_back(f[i]);
        ts.labels.push_back(set == &c);
      }
    ts.crack_count += c.size();
    ts.background_count += b.size();
  }
  if (ts.crack_count == 0) throw TrainingError("training pairs contain no crack voxels");
  return ts;
}

struct TreeNode {
  std::int32_t feature = -1;
  float threshold = 0.0f;
  std::int32_t left = -1, right = -1;
  std::uint8_t cls = 0;
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  ///< nodes[0] is the root

  template <class Get>
  std::uint8_t predict(Get&& feature) const {
    std::size_t n = 0;
    while (nodes[n].feature >= 0) n = std::size_t(feature(nodes[n].feature) <= nodes[n].threshold ? nodes[n].left : nodes[n].right);
    return nodes[n].cls;
  }
  std::uint8_t predict_row(const float* row) const {
    return predict([row](std::int32_t f) { return row[f]; });
  }
  int depth() const {
    std::vector<int> d(nodes.size(), 0);
    int best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      best = std::max(best, d[i]);
      if (nodes[i].feature >= 0) d[std::size_t(nodes[i].left)] = d[std::size_t(nodes[i].right)] = d[i] + 1;
    }
    return best;
  }
  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

struct ForestParams {
  int n_trees = 100;
  int max_depth = 50;
  std::uint64_t seed = 0;
  bool bootstrap = true;
  int mtry = 0;  ///< 0 selects floor(sqrt(d))

  void validate() const {
    if (n_trees < 1) throw ParameterError("forest needs at least one tree");
    if (max_depth < 1) throw ParameterError("tree depth must be >= 1");
    if (mtry < 0) throw ParameterError("mtry must be non-negative");
  }
};

struct Forest {
  FeatureBankConfig bank;
  std::vector<DecisionTree> trees;
  nlohmann::ordered_json metadata;
};

namespace detail {

inline double gini(double pos, double n) {
  if (n <= 0.0) return 0.0;
  const double p = pos / n;
  return 2.0 * p * (1.0 - p);
}

class TreeBuilder {
 public:
  TreeBuilder(const TrainingSet& ts, int max_depth, int mtry, Rng& rng)
      : ts_(ts), max_depth_(max_depth), mtry_(std::size_t(mtry)), rng_(rng) {}

  DecisionTree build(std::vector<std::size_t> rows) {
    tree_.nodes.clear();
    grow(rows, 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    bool found = false;
    std::int32_t feature = -1;
    float threshold = 0.0f;
    double impurity = 0.0;
  };

  std::int32_t grow(std::vector<std::size_t>& rows, int depth) {
    const std::int32_t id = std::int32_t(tree_.nodes.size());
    tree_.nodes.emplace_back();
    std::size_t pos = 0;
    for (std::size_t r : rows) pos += ts_.labels[r];
    const std::uint8_t majority = 2 * pos > rows.size();
    if (depth >= max_depth_ || pos == 0 || pos == rows.size()) {
      tree_.nodes[std::size_t(id)].cls = majority;
      return id;
    }
    const Split s = best_split(rows, pos);
    if (!s.found) {
      tree_.nodes[std::size_t(id)].cls = majority;
      return id;
    }
    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) (ts_.row(r)[s.feature] <= s.threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const std::int32_t l = grow(left, depth + 1);
    const std::int32_t r = grow(right, depth + 1);
    TreeNode& node = tree_.nodes[std::size_t(id)];
    node.feature = s.feature;
    node.threshold = s.threshold;
    node.left = l;
    node.right = r;
    node.cls = majority;
    return id;
  }

  // Candidate features are drawn without replacement; when none of the
  // first mtry yields a split the remaining ones are tried in drawn order.
  Split best_split(const std::vector<std::size_t>& rows, std::size_t pos) {
    std::vector<std::size_t> order(ts_.dim);
    std::iota(order.begin(), order.end(), 0);
    // With every feature a candidate the natural order is kept, so ties go
    // to the lowest feature index.
    for (std::size_t i = 0; mtry_ < ts_.dim && i + 1 < order.size(); ++i) {
      std::uniform_int_distribution<std::size_t> u(i, order.size() - 1);
      std::swap(order[i], order[u(rng_)]);
    }
    const double n = double(rows.size());
    const double parent = gini(double(pos), n);
    Split best;
    best.impurity = parent;
    std::vector<std::pair<float, std::uint8_t>> vals(rows.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (k >= mtry_ && best.found) break;
      const std::size_t f = order[k];
      for (std::size_t i = 0; i < rows.size(); ++i) vals[i] = {ts_.row(rows[i])[f], ts_.labels[rows[i]]};
      std::sort(vals.begin(), vals.end());
      double lpos = 0.0;
      for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
        lpos += vals[i].second;
        if (!(vals[i].first < vals[i + 1].first)) continue;
        const double nl = double(i + 1), nr = n - nl;
        const double imp = (nl * gini(lpos, nl) + nr * gini(double(pos) - lpos, nr)) / n;
        if (imp < best.impurity - 1e-12) {
          float thr = float(0.5 * (double(vals[i].first) + double(vals[i + 1].first)));
          if (!(thr < vals[i + 1].first)) thr = vals[i].first;
          best = {true, std::int32_t(f), thr, imp};
        }
      }
    }
    return best;
  }

  const TrainingSet& ts_;
  int max_depth_;
  std::size_t mtry_;
  Rng& rng_;
  DecisionTree tree_;
};

}  // namespace detail

inline Forest train_forest(const TrainingSet& ts, const FeatureBankConfig& bank, const ForestParams& p) {
  p.validate();
  if (ts.size() == 0) throw TrainingError("empty training set");
  if (ts.dim != bank.feature_count()) throw ContractError("training set dimension does not match the feature bank");
  const int mtry = p.mtry > 0 ? std::min<int>(p.mtry, int(ts.dim))
                              : std::max(1, int(std::floor(std::sqrt(double(ts.dim)))));
  Forest f;
  f.bank = bank;
  f.trees.resize(std::size_t(p.n_trees));
  parallel_for(0, f.trees.size(), [&](std::size_t t) {
    Rng rng(derive_seed(p.seed, {t}));
    std::vector<std::size_t> rows(ts.size());
    if (p.bootstrap) {
      std::uniform_int_distribution<std::size_t> u(0, ts.size() - 1);
      for (auto& r : rows) r = u(rng);
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    f.trees[t] = detail::TreeBuilder(ts, p.max_depth, mtry, rng).build(std::move(rows));
  });
  f.metadata = {{"n_dt", p.n_trees},
                {"d_dt", p.max_depth},
                {"seed", p.seed},
                {"criterion", "gini"},
                {"mtry", mtry},
                {"bootstrap", p.bootstrap},
                {"rows", ts.size()},
                {"crack_rows", ts.crack_count},
                {"background_rows", ts.background_count}};
  return f;
}

/// Votes of all trees on one feature row.
inline std::size_t forest_votes(const Forest& f, const float* row) {
  std::size_t v = 0;
  for (const auto& t : f.trees) v += t.predict_row(row);
  return v;
}

inline bool majority(std::size_t votes, std::size_t trees) { return 2 * votes > trees; }

/// Extracts planes [z0, z1) of a volume.
inline Volume z_slab(const Volume& vol, std::size_t z0, std::size_t z1) {
  const Dims d = vol.dims();
  Volume out({d.nx, d.ny, z1 - z0});
  const std::size_t plane = d.nx * d.ny;
  std::copy(vol.samples().begin() + long(z0 * plane), vol.samples().begin() + long(z1 * plane), out.samples().begin());
  return out;
}

/// Classifies every voxel. Features are computed on z-slabs padded by the
/// bank's halo, which gives the same values as the whole-volume bank;
/// `slab_planes` = 0 picks a slab size keeping the feature stack near 1 GiB.
inline BinaryMask predict_forest(const Forest& f, const Volume& vol, std::size_t slab_planes = 0) {
  if (f.trees.empty()) throw ContractError("forest has no trees");
  const Dims d = vol.dims();
  const std::size_t F = f.bank.feature_count(), plane = d.nx * d.ny;
  if (slab_planes == 0) slab_planes = std::max<std::size_t>(8, (std::size_t{1} << 30) / (4 * F * plane));
  const std::size_t halo = feature_halo(f.bank);
  BinaryMask out(d);
  for (std::size_t z0 = 0; z0 < d.nz; z0 += slab_planes) {
    const std::size_t z1 = std::min(d.nz, z0 + slab_planes);
    const std::size_t lo = z0 >= halo ? z0 - halo : 0, hi = std::min(d.nz, z1 + halo);
    const FeatureStack fs = feature_bank(lo == 0 && hi == d.nz ? vol : z_slab(vol, lo, hi), f.bank);
    const std::size_t n = (z1 - z0) * plane, skip = (z0 - lo) * plane;
    std::vector<unsigned char> cls(n, 0);
    parallel_for(0, z1 - z0, [&](std::size_t zz) {
      for (std::size_t k = zz * plane; k < (zz + 1) * plane; ++k) {
        const std::size_t i = skip + k;
        std::size_t ones = 0, zeros = 0;
        for (const auto& t : f.trees) {
          (t.predict([&](std::int32_t j) { return fs.volumes[std::size_t(j)][i]; }) ? ones : zeros)++;
          if (majority(ones, f.trees.size()) || 2 * zeros >= f.trees.size()) break;
        }
        cls[k] = majority(ones, f.trees.size());
      }
    });
    for (std::size_t k = 0; k < n; ++k)
      if (cls[k]) out.set(z0 * plane + k);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

inline constexpr char forest_magic[] = "CRKFOREST1\n";

template <class T>
void put_le(std::string& s, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  s.append(b, sizeof(T));
}

class Reader {
 public:
  Reader(const std::vector<char>& b, const std::string& what) : b_(b), what_(what) {}
  template <class T>
  T get() {
    if (pos_ + sizeof(T) > b_.size()) throw CorruptFileError(what_ + ": truncated forest file");
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    if (n > b_.size() - pos_) throw CorruptFileError(what_ + ": truncated forest file");
    std::string s(b_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::vector<char>& b_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline void save_forest(const std::filesystem::path& path, const Forest& f) {
  nlohmann::ordered_json h;
  h["format"] = "crackseg-forest";
  h["version"] = 1;
  h["feature_bank"] = to_json(f.bank);
  h["feature_order"] = feature_names(f.bank);
  h["metadata"] = f.metadata;
  h["trees"] = f.trees.size();
  const std::string header = h.dump();
  std::string out(detail::forest_magic);
  detail::put_le<std::uint64_t>(out, header.size());
  out += header;
  for (const auto& t : f.trees) {
    detail::put_le<std::uint32_t>(out, std::uint32_t(t.nodes.size()));
    for (const auto& n : t.nodes) {
      detail::put_le(out, n.feature);
      detail::put_le(out, n.threshold);
      detail::put_le(out, n.left);
      detail::put_le(out, n.right);
      detail::put_le(out, n.cls);
    }
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(out.data(), std::streamsize(out.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

/// `expected`, when given, must equal the stored feature bank.
inline Forest load_forest(const std::filesystem::path& path, const FeatureBankConfig* expected = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  const std::vector<char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const std::string what = path.string();
  const std::size_t magic_len = sizeof(detail::forest_magic) - 1;
  if (buf.size() < magic_len || std::memcmp(buf.data(), detail::forest_magic, magic_len) != 0)
    throw FormatError(what + ": not a forest file");
  detail::Reader r(buf, what);
  r.bytes(magic_len);
  const auto hlen = r.get<std::uint64_t>();
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(r.bytes(std::size_t(hlen)));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError(what + ": bad forest header: " + e.what());
  }
  Forest f;
  std::size_t ntrees = 0;
  try {
    if (h.at("format") != "crackseg-forest" || h.at("version") != 1)
      throw ContractError(what + ": unsupported forest format or version");
    f.bank = feature_bank_from_json(h.at("feature_bank"));
    if (h.at("feature_order").get<std::vector<std::string>>() != feature_names(f.bank))
      throw ContractError(what + ": feature order does not match the stored bank");
    f.metadata = h.at("metadata");
    ntrees = h.at("trees").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFileError(what + ": bad forest header: " + e.what());
  }
  if (expected && !(*expected == f.bank)) throw ContractError(what + ": forest was trained with a different feature bank");
  const auto F = std::int32_t(f.bank.feature_count());
  for (std::size_t t = 0; t < ntrees; ++t) {
    DecisionTree tree;
    tree.nodes.resize(r.get<std::uint32_t>());
    if (tree.nodes.empty()) throw CorruptFileError(what + ": empty tree");
    for (auto& n : tree.nodes) {
      n.feature = r.get<std::int32_t>();
      n.threshold = r.get<float>();
      n.left = r.get<std::int32_t>();
      n.right = r.get<std::int32_t>();
      n.cls = r.get<std::uint8_t>();
    }
    const auto count = std::int32_t(tree.nodes.size());
    for (std::int32_t i = 0; i < count; ++i) {
      const auto& n = tree.nodes[std::size_t(i)];
      if (n.feature >= F || n.feature < -1 || n.cls > 1 ||
          (n.feature >= 0 && (n.left <= i || n.right <= i || n.left >= count || n.right >= count)))
        throw CorruptFileError(what + ": invalid tree node");
    }
    f.trees.push_back(std::move(tree));
  }
  if (!r.done()) throw CorruptFileError(what + ": trailing bytes after the last tree");
  return f;
}

}  // namespace crackseg

#endif  // CRACKSEG_FOREST_HPP

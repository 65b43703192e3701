#pragma once

// Dataset representation, the synthetic compositional generator, and the
// seen/unseen split machinery.
//
// Features file (binary): ASCII "czsl-feat v1\n", then sample count and
// feature width as little-endian u64, then row-major little-endian f32.
// Labels file (text): one "attr_name obj_name split" line per sample, with
// split in {train, test_seen, test_unseen}; line order matches feature rows.
// The candidate catalog is the set of distinct labeled pairs in lexicographic
// (attr_id, obj_id) order; a pair is seen iff it occurs in a train line.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cscnet/semantics.hpp"
#include "cscnet/tensor.hpp"

namespace cscnet {

template <class Real>
struct Sample {
  TensorPtr<Real> feature;  // constant, plays the backbone output
  std::size_t attr_id = 0;
  std::size_t obj_id = 0;
};

template <class Real>
struct DatasetSplit {
  std::vector<Sample<Real>> train;  // seen pairs only
  std::vector<Sample<Real>> test;   // seen and unseen pairs
  CompositionCatalog catalog;
};

struct SynthSpec {
  std::size_t n_attrs = 5;
  std::size_t n_objs = 5;
  std::size_t d_x = 32;
  std::size_t samples_per_pair = 30;
  double seen_fraction = 0.8;
  double noise_sigma = 0.1;
  double entanglement = 0.5;
  std::uint64_t seed = 1;
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

template <class Real>
void validate_split(const DatasetSplit<Real>& split, const SemanticSpace<Real>& space) {
  validate_catalog(split.catalog, space);

  std::vector<std::uint8_t> attr_covered(space.n_attrs(), 0);
  std::vector<std::uint8_t> obj_covered(space.n_objs(), 0);
  bool any_seen_pair = false, any_unseen_pair = false;
  for (std::size_t k = 0; k < split.catalog.size(); ++k) {
    if (split.catalog.seen[k]) {
      any_seen_pair = true;
      attr_covered[split.catalog.pairs[k].first] = 1;
      obj_covered[split.catalog.pairs[k].second] = 1;
    } else {
      any_unseen_pair = true;
    }
  }
  if (!any_seen_pair || !any_unseen_pair) {
    throw std::runtime_error("dataset: catalog needs at least one seen and one unseen pair");
  }
  for (std::size_t a = 0; a < space.n_attrs(); ++a) {
    if (!attr_covered[a]) {
      throw std::runtime_error("dataset: attribute '" + space.attr_names[a] +
                               "' appears in no seen pair");
    }
  }
  for (std::size_t o = 0; o < space.n_objs(); ++o) {
    if (!obj_covered[o]) {
      throw std::runtime_error("dataset: object '" + space.obj_names[o] + "' appears in no seen pair");
    }
  }

  auto check_sample = [&](const Sample<Real>& s, const char* group, std::size_t index) {
    const std::size_t k = split.catalog.find(s.attr_id, s.obj_id);
    if (k == CompositionCatalog::npos) {
      throw std::runtime_error("dataset: " + std::string(group) + " sample " + std::to_string(index) +
                               " uses pair (" + std::to_string(s.attr_id) + "," +
                               std::to_string(s.obj_id) + ") missing from the catalog");
    }
    if (!all_finite(*s.feature)) {
      throw std::runtime_error("dataset: " + std::string(group) + " sample " + std::to_string(index) +
                               " has a non-finite feature");
    }
    return k;
  };

  for (std::size_t i = 0; i < split.train.size(); ++i) {
    const std::size_t k = check_sample(split.train[i], "train", i);
    if (!split.catalog.seen[k]) {
      throw std::runtime_error("dataset: train sample " + std::to_string(i) + " uses unseen pair (" +
                               space.attr_names[split.train[i].attr_id] + "," +
                               space.obj_names[split.train[i].obj_id] + ")");
    }
  }
  bool test_seen_sample = false, test_unseen_sample = false;
  for (std::size_t i = 0; i < split.test.size(); ++i) {
    const std::size_t k = check_sample(split.test[i], "test", i);
    (split.catalog.seen[k] ? test_seen_sample : test_unseen_sample) = true;
  }
  if (!test_seen_sample || !test_unseen_sample) {
    throw std::runtime_error("dataset: test set needs at least one seen-pair and one unseen-pair sample");
  }
}

// Prototype per pair: W_a u_a + W_o u_o + entanglement * W_x (u_a ⊙ u_o) with
// fixed seeded maps; samples are prototype plus Gaussian noise. Unseen pairs
// are chosen at random among those whose removal keeps every primitive
// covered by a seen pair.
template <class Real>
DatasetSplit<Real> generate_synthetic_dataset(const SynthSpec& spec, const SemanticSpace<Real>& space) {
  if (space.n_attrs() != spec.n_attrs || space.n_objs() != spec.n_objs) {
    throw std::runtime_error("generate_synthetic_dataset: semantic space has " +
                             std::to_string(space.n_attrs()) + "x" + std::to_string(space.n_objs()) +
                             " primitives, spec asks for " + std::to_string(spec.n_attrs) + "x" +
                             std::to_string(spec.n_objs));
  }
  if (!(spec.seen_fraction > 0.0 && spec.seen_fraction < 1.0)) {
    throw std::runtime_error("generate_synthetic_dataset: seen_fraction must lie in (0,1)");
  }
  if (spec.noise_sigma < 0.0) throw std::runtime_error("generate_synthetic_dataset: noise_sigma must be >= 0");
  if (spec.entanglement < 0.0 || spec.entanglement > 1.0) {
    throw std::runtime_error("generate_synthetic_dataset: entanglement must lie in [0,1]");
  }
  if (spec.samples_per_pair < 2) {
    throw std::runtime_error("generate_synthetic_dataset: samples_per_pair must be at least 2");
  }

  const std::size_t n = spec.n_attrs, m = spec.n_objs, d = space.dim, d_x = spec.d_x;
  const std::size_t total_pairs = n * m;
  const auto seen_target =
      static_cast<std::size_t>(std::llround(spec.seen_fraction * static_cast<double>(total_pairs)));
  if (seen_target >= total_pairs) {
    throw std::runtime_error("generate_synthetic_dataset: seen_fraction " +
                             std::to_string(spec.seen_fraction) + " leaves no unseen pairs in a " +
                             std::to_string(n) + "x" + std::to_string(m) + " catalog");
  }

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  auto draw_map = [&] {
    std::vector<double> w(d_x * d);
    for (double& v : w) v = gauss(rng);
    return w;
  };
  const std::vector<double> w_attr = draw_map();
  const std::vector<double> w_obj = draw_map();
  const std::vector<double> w_cross = draw_map();

  // Seen set: first a minimal cover (one pair per attribute against a shuffled
  // object cycle, then one per leftover object), then random fill.
  std::vector<std::pair<std::size_t, std::size_t>> cover;
  {
    std::vector<std::size_t> obj_perm(m);
    for (std::size_t i = 0; i < m; ++i) obj_perm[i] = i;
    std::shuffle(obj_perm.begin(), obj_perm.end(), rng);
    std::vector<std::uint8_t> obj_done(m, 0);
    for (std::size_t a = 0; a < n; ++a) {
      const std::size_t o = obj_perm[a % m];
      cover.emplace_back(a, o);
      obj_done[o] = 1;
    }
    for (std::size_t o = 0; o < m; ++o) {
      if (!obj_done[o]) {
        const std::size_t a = rng() % n;
        cover.emplace_back(a, o);
      }
    }
  }
  if (cover.size() > seen_target) {
    const auto& dropped = cover[seen_target];
    const std::string who = dropped.first < n && seen_target < n
                                ? "attribute '" + space.attr_names[dropped.first] + "'"
                                : "object '" + space.obj_names[dropped.second] + "'";
    throw std::runtime_error("generate_synthetic_dataset: seen_fraction " +
                             std::to_string(spec.seen_fraction) + " gives " +
                             std::to_string(seen_target) + " seen pairs, too few to cover " + who);
  }

  std::vector<std::uint8_t> seen_grid(total_pairs, 0);
  std::size_t seen_count = 0;
  for (const auto& [a, o] : cover) {
    if (!seen_grid[a * m + o]) {
      seen_grid[a * m + o] = 1;
      ++seen_count;
    }
  }
  {
    std::vector<std::size_t> order(total_pairs);
    for (std::size_t i = 0; i < total_pairs; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t idx : order) {
      if (seen_count >= seen_target) break;
      if (!seen_grid[idx]) {
        seen_grid[idx] = 1;
        ++seen_count;
      }
    }
  }

  DatasetSplit<Real> split;
  split.catalog.pairs.reserve(total_pairs);
  split.catalog.seen.reserve(total_pairs);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t o = 0; o < m; ++o) {
      split.catalog.pairs.emplace_back(a, o);
      split.catalog.seen.push_back(seen_grid[a * m + o]);
    }
  }

  const std::size_t test_per_seen_pair = std::max<std::size_t>(1, spec.samples_per_pair / 5);
  for (std::size_t k = 0; k < total_pairs; ++k) {
    const auto [a, o] = split.catalog.pairs[k];
    const auto& ua = space.attr_rows[a]->values;
    const auto& uo = space.obj_rows[o]->values;
    std::vector<double> proto(d_x, 0.0);
    for (std::size_t r = 0; r < d_x; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < d; ++c) {
        const double xa = static_cast<double>(ua[c]);
        const double xo = static_cast<double>(uo[c]);
        s += w_attr[r * d + c] * xa + w_obj[r * d + c] * xo +
             spec.entanglement * w_cross[r * d + c] * (xa * xo);
      }
      proto[r] = s;
    }
    for (std::size_t i = 0; i < spec.samples_per_pair; ++i) {
      std::vector<Real> feature(d_x);
      for (std::size_t r = 0; r < d_x; ++r) {
        double v = proto[r];
        if (spec.noise_sigma > 0.0) v += spec.noise_sigma * gauss(rng);
        feature[r] = static_cast<Real>(v);
      }
      Sample<Real> sample{constant<Real>({d_x}, std::move(feature)), a, o};
      const bool to_test =
          !split.catalog.seen[k] || i >= spec.samples_per_pair - test_per_seen_pair;
      (to_test ? split.test : split.train).push_back(std::move(sample));
    }
  }

  validate_split(split, space);
  return split;
}

namespace detail {

inline void write_bytes(std::ostream& out, const void* data, std::size_t count) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(count));
}

inline void write_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  write_bytes(out, b, 8);
}

inline std::uint64_t read_u64_le(std::istream& in, const char* what) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (in.gcount() != 8) throw std::runtime_error(std::string(what) + ": truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void write_f32_le(std::ostream& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
  write_bytes(out, b, 4);
}

inline float read_f32_le(std::istream& in, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw std::runtime_error(std::string(what) + ": truncated file");
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

inline void write_f64_le(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  write_u64_le(out, bits);
}

inline double read_f64_le(std::istream& in, const char* what) {
  return std::bit_cast<double>(read_u64_le(in, what));
}

inline void expect_magic(std::istream& in, const std::string& magic, const char* what) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(magic.size()));
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) || got != magic) {
    throw std::runtime_error(std::string(what) + ": bad magic");
  }
}

}  // namespace detail

inline constexpr const char* kFeaturesMagic = "czsl-feat v1\n";

template <class Real>
void save_features(const DatasetSplit<Real>& split, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_features: cannot open '" + path + "' for writing");
  const std::size_t count = split.train.size() + split.test.size();
  const std::size_t d_x = count == 0 ? 0 : (split.train.empty() ? split.test : split.train)[0].feature->numel();
  detail::write_bytes(out, kFeaturesMagic, std::strlen(kFeaturesMagic));
  detail::write_u64_le(out, count);
  detail::write_u64_le(out, d_x);
  auto write_group = [&](const std::vector<Sample<Real>>& group) {
    for (const auto& s : group) {
      for (Real v : s.feature->values) detail::write_f32_le(out, static_cast<float>(v));
    }
  };
  write_group(split.train);
  write_group(split.test);
  if (!out) throw std::runtime_error("save_features: write to '" + path + "' failed");
}

template <class Real>
void save_labels(const DatasetSplit<Real>& split, const SemanticSpace<Real>& space,
                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_labels: cannot open '" + path + "' for writing");
  for (const auto& s : split.train) {
    out << space.attr_names[s.attr_id] << ' ' << space.obj_names[s.obj_id] << " train\n";
  }
  for (const auto& s : split.test) {
    const std::size_t k = split.catalog.find(s.attr_id, s.obj_id);
    out << space.attr_names[s.attr_id] << ' ' << space.obj_names[s.obj_id] << ' '
        << (split.catalog.seen[k] ? "test_seen" : "test_unseen") << "\n";
  }
  if (!out) throw std::runtime_error("save_labels: write to '" + path + "' failed");
}

template <class Real>
DatasetSplit<Real> load_dataset(const std::string& features_path, const std::string& labels_path,
                                const SemanticSpace<Real>& space) {
  std::ifstream fin(features_path, std::ios::binary);
  if (!fin) throw std::runtime_error("load_dataset: cannot open '" + features_path + "'");
  detail::expect_magic(fin, kFeaturesMagic, "load_dataset(features)");
  const std::uint64_t count = detail::read_u64_le(fin, "load_dataset(features)");
  const std::uint64_t d_x = detail::read_u64_le(fin, "load_dataset(features)");
  std::vector<std::vector<Real>> rows(count);
  for (auto& row : rows) {
    row.resize(d_x);
    for (std::uint64_t c = 0; c < d_x; ++c) {
      row[c] = static_cast<Real>(detail::read_f32_le(fin, "load_dataset(features)"));
    }
  }
  if (fin.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error("load_dataset(features): trailing bytes after " + std::to_string(count) +
                             " rows");
  }

  std::ifstream lin(labels_path);
  if (!lin) throw std::runtime_error("load_dataset: cannot open '" + labels_path + "'");
  struct Row {
    std::size_t attr, obj;
    int group;  // 0 train, 1 test_seen, 2 test_unseen
  };
  std::vector<Row> labels;
  labels.reserve(count);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lin, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string attr, obj, group;
    if (!(ls >> attr >> obj >> group)) {
      throw std::runtime_error("load_dataset(labels): line " + std::to_string(line_no) + " malformed");
    }
    int g;
    if (group == "train") {
      g = 0;
    } else if (group == "test_seen") {
      g = 1;
    } else if (group == "test_unseen") {
      g = 2;
    } else {
      throw std::runtime_error("load_dataset(labels): line " + std::to_string(line_no) +
                               ": unknown split '" + group + "'");
    }
    labels.push_back({space.attr_id(attr), space.obj_id(obj), g});
  }
  if (labels.size() != count) {
    throw std::runtime_error("load_dataset: features file has " + std::to_string(count) +
                             " rows but labels file has " + std::to_string(labels.size()));
  }

  // Catalog: distinct pairs in lexicographic order; seen iff present in train.
  std::vector<std::pair<std::size_t, std::size_t>> distinct;
  std::unordered_set<std::uint64_t> pair_set, train_set;
  for (const Row& r : labels) {
    const std::uint64_t key = (static_cast<std::uint64_t>(r.attr) << 32) | r.obj;
    if (pair_set.insert(key).second) distinct.emplace_back(r.attr, r.obj);
    if (r.group == 0) train_set.insert(key);
  }
  std::sort(distinct.begin(), distinct.end());

  DatasetSplit<Real> split;
  for (const auto& [a, o] : distinct) {
    const std::uint64_t key = (static_cast<std::uint64_t>(a) << 32) | o;
    split.catalog.pairs.emplace_back(a, o);
    split.catalog.seen.push_back(train_set.count(key) ? 1 : 0);
  }

  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Row& r = labels[i];
    const std::uint64_t key = (static_cast<std::uint64_t>(r.attr) << 32) | r.obj;
    const bool in_train_pairs = train_set.count(key) != 0;
    if (r.group == 1 && !in_train_pairs) {
      throw std::runtime_error("load_dataset: sample " + std::to_string(i) + " tagged test_seen but pair (" +
                               space.attr_names[r.attr] + "," + space.obj_names[r.obj] +
                               ") never occurs in train");
    }
    if (r.group == 2 && in_train_pairs) {
      throw std::runtime_error("load_dataset: sample " + std::to_string(i) +
                               " tagged test_unseen but pair (" + space.attr_names[r.attr] + "," +
                               space.obj_names[r.obj] + ") occurs in train");
    }
    const std::size_t width = rows[i].size();
    Sample<Real> s{constant<Real>({width}, std::move(rows[i])), r.attr, r.obj};
    (r.group == 0 ? split.train : split.test).push_back(std::move(s));
  }

  validate_split(split, space);
  return split;
}

// Epoch-seeded shuffle of train indices; every sample appears exactly once
// per epoch and the last batch may be short.
template <class Real>
std::vector<std::vector<std::size_t>> batches(const DatasetSplit<Real>& split, std::size_t batch_size,
                                              std::uint64_t seed, std::size_t epoch) {
  if (batch_size == 0) throw std::runtime_error("batches: batch_size must be at least 1");
  if (split.train.empty()) throw std::runtime_error("batches: train set is empty");
  std::vector<std::size_t> order(split.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(mix_seed(seed, epoch));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

// FNV-1a over a canonical serialization; used to prove ablation variants ran
// on identical data.
template <class Real>
std::uint64_t hash_dataset(const DatasetSplit<Real>& split, const SemanticSpace<Real>& space) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t count) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < count; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  auto mix_u64 = [&](std::uint64_t v) { mix(&v, 8); };
  auto mix_str = [&](const std::string& s) {
    mix_u64(s.size());
    mix(s.data(), s.size());
  };
  auto mix_sample = [&](const Sample<Real>& s) {
    mix_u64(s.attr_id);
    mix_u64(s.obj_id);
    for (Real v : s.feature->values) {
      const double d = static_cast<double>(v);
      mix_u64(std::bit_cast<std::uint64_t>(d));
    }
  };
  for (const auto& name : space.attr_names) mix_str(name);
  for (const auto& name : space.obj_names) mix_str(name);
  mix_u64(split.catalog.size());
  for (std::size_t k = 0; k < split.catalog.size(); ++k) {
    mix_u64(split.catalog.pairs[k].first);
    mix_u64(split.catalog.pairs[k].second);
    mix_u64(split.catalog.seen[k]);
  }
  mix_u64(split.train.size());
  for (const auto& s : split.train) mix_sample(s);
  mix_u64(split.test.size());
  for (const auto& s : split.test) mix_sample(s);
  return h;
}

}  // namespace cscnet

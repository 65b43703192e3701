#pragma once

// Semantic side of the matching problem: attribute/object embedding tables,
// the composition candidate catalog, and the learned composition embedder.
//
// Embedding file format (UTF-8 text):
//   czsl-emb v1 dim=<d>
//   [attributes]
//   <name> v1 v2 ... vd
//   [objects]
//   <name> v1 v2 ... vd
// Names carry no whitespace; rows are L2-normalized on ingest.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cscnet/mlp.hpp"
#include "cscnet/tensor.hpp"

namespace cscnet {

template <class Real>
struct SemanticSpace {
  std::vector<std::string> attr_names;
  std::vector<std::string> obj_names;
  std::vector<TensorPtr<Real>> attr_rows;  // unit-norm constants, one per attribute
  std::vector<TensorPtr<Real>> obj_rows;
  std::size_t dim = 0;

  std::size_t n_attrs() const { return attr_rows.size(); }
  std::size_t n_objs() const { return obj_rows.size(); }

  std::size_t attr_id(const std::string& name) const {
    for (std::size_t i = 0; i < attr_names.size(); ++i)
      if (attr_names[i] == name) return i;
    throw std::runtime_error("semantic space: unknown attribute '" + name + "'");
  }

  std::size_t obj_id(const std::string& name) const {
    for (std::size_t i = 0; i < obj_names.size(); ++i)
      if (obj_names[i] == name) return i;
    throw std::runtime_error("semantic space: unknown object '" + name + "'");
  }
};

// Candidate composition pairs in canonical order plus their seen flags.
struct CompositionCatalog {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (attr_id, obj_id)
  std::vector<std::uint8_t> seen;                          // aligned with pairs

  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  std::size_t size() const { return pairs.size(); }

  std::size_t find(std::size_t attr, std::size_t obj) const {
    for (std::size_t k = 0; k < pairs.size(); ++k)
      if (pairs[k].first == attr && pairs[k].second == obj) return k;
    return npos;
  }
};

template <class Real>
void validate_catalog(const CompositionCatalog& catalog, const SemanticSpace<Real>& space) {
  if (catalog.pairs.size() != catalog.seen.size()) {
    throw std::runtime_error("catalog: seen mask length does not match pair count");
  }
  std::unordered_set<std::uint64_t> dedup;
  for (const auto& [a, o] : catalog.pairs) {
    if (a >= space.n_attrs() || o >= space.n_objs()) {
      throw std::runtime_error("catalog: pair (" + std::to_string(a) + "," + std::to_string(o) +
                               ") out of range for the semantic space");
    }
    const std::uint64_t key = (static_cast<std::uint64_t>(a) << 32) | o;
    if (!dedup.insert(key).second) {
      throw std::runtime_error("catalog: duplicate pair (" + space.attr_names[a] + "," +
                               space.obj_names[o] + ")");
    }
  }
}

namespace detail {

template <class Real>
TensorPtr<Real> normalized_row(std::vector<Real> v, const std::string& name) {
  double nrm = 0;
  for (Real x : v) {
    if (!std::isfinite(static_cast<double>(x))) {
      throw std::runtime_error("embedding row '" + name + "': non-finite value");
    }
    nrm += static_cast<double>(x) * static_cast<double>(x);
  }
  nrm = std::sqrt(nrm);
  if (nrm == 0.0) throw std::runtime_error("embedding row '" + name + "': zero vector");
  for (Real& x : v) x = static_cast<Real>(static_cast<double>(x) / nrm);
  const std::size_t dim = v.size();
  return constant<Real>({dim}, std::move(v));
}

}  // namespace detail

template <class Real>
SemanticSpace<Real> load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_embeddings: cannot open '" + path + "'");

  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("load_embeddings: empty file");
  std::size_t dim = 0;
  {
    std::istringstream hs(header);
    std::string magic, version, dim_field;
    hs >> magic >> version >> dim_field;
    if (magic != "czsl-emb" || version != "v1" || dim_field.rfind("dim=", 0) != 0) {
      throw std::runtime_error("load_embeddings: bad header '" + header + "'");
    }
    dim = static_cast<std::size_t>(std::stoull(dim_field.substr(4)));
    if (dim == 0) throw std::runtime_error("load_embeddings: dim must be positive");
  }

  SemanticSpace<Real> space;
  space.dim = dim;
  enum class Section { none, attributes, objects };
  Section section = Section::none;
  std::unordered_set<std::string> attr_seen, obj_seen;

  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line == "[attributes]") {
      section = Section::attributes;
      continue;
    }
    if (line == "[objects]") {
      section = Section::objects;
      continue;
    }
    if (section == Section::none) {
      throw std::runtime_error("load_embeddings: row before any section: '" + line + "'");
    }
    std::istringstream ls(line);
    std::string name;
    ls >> name;
    std::vector<Real> row;
    row.reserve(dim);
    double x;
    while (ls >> x) row.push_back(static_cast<Real>(x));
    if (!ls.eof()) {
      throw std::runtime_error("load_embeddings: row '" + name + "': malformed value");
    }
    if (row.size() != dim) {
      throw std::runtime_error("load_embeddings: row '" + name + "' has " +
                               std::to_string(row.size()) + " values, expected " +
                               std::to_string(dim));
    }
    auto& dedup = section == Section::attributes ? attr_seen : obj_seen;
    if (!dedup.insert(name).second) {
      throw std::runtime_error("load_embeddings: duplicate name '" + name + "'");
    }
    auto tensor = detail::normalized_row<Real>(std::move(row), name);
    if (section == Section::attributes) {
      space.attr_names.push_back(name);
      space.attr_rows.push_back(std::move(tensor));
    } else {
      space.obj_names.push_back(name);
      space.obj_rows.push_back(std::move(tensor));
    }
  }

  if (space.n_attrs() < 2) throw std::runtime_error("load_embeddings: attribute section needs at least 2 rows");
  if (space.n_objs() < 2) throw std::runtime_error("load_embeddings: object section needs at least 2 rows");
  return space;
}

template <class Real>
void write_embeddings(const SemanticSpace<Real>& space, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_embeddings: cannot open '" + path + "' for writing");
  out << "czsl-emb v1 dim=" << space.dim << "\n";
  out.precision(17);
  out << "[attributes]\n";
  for (std::size_t i = 0; i < space.n_attrs(); ++i) {
    out << space.attr_names[i];
    for (Real v : space.attr_rows[i]->values) out << ' ' << static_cast<double>(v);
    out << "\n";
  }
  out << "[objects]\n";
  for (std::size_t i = 0; i < space.n_objs(); ++i) {
    out << space.obj_names[i];
    for (Real v : space.obj_rows[i]->values) out << ' ' << static_cast<double>(v);
    out << "\n";
  }
  if (!out) throw std::runtime_error("write_embeddings: write to '" + path + "' failed");
}

// Seeded unit-norm Gaussian rows; any row whose cosine against an accepted
// row reaches 0.95 is resampled (bounded retries).
template <class Real>
SemanticSpace<Real> generate_synthetic_embeddings(std::size_t n_attrs, std::size_t n_objs,
                                                  std::size_t dim, std::uint64_t seed) {
  if (n_attrs < 2 || n_objs < 2) {
    throw std::runtime_error("generate_synthetic_embeddings: need at least 2 attributes and 2 objects");
  }
  if (dim < 2) throw std::runtime_error("generate_synthetic_embeddings: dim must be at least 2");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  constexpr double kCosineCap = 0.95;
  constexpr int kMaxRetries = 10000;

  std::vector<std::vector<double>> accepted;
  auto draw_row = [&](const std::string& name) {
    for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
      std::vector<double> row(dim);
      double nrm = 0;
      for (double& v : row) {
        v = gauss(rng);
        nrm += v * v;
      }
      nrm = std::sqrt(nrm);
      if (nrm == 0.0) continue;
      for (double& v : row) v /= nrm;
      bool ok = true;
      for (const auto& other : accepted) {
        double cos = 0;
        for (std::size_t i = 0; i < dim; ++i) cos += row[i] * other[i];
        if (cos >= kCosineCap) {
          ok = false;
          break;
        }
      }
      if (ok) {
        accepted.push_back(row);
        return row;
      }
    }
    throw std::runtime_error("generate_synthetic_embeddings: could not place row '" + name +
                             "' under the cosine cap");
  };

  SemanticSpace<Real> space;
  space.dim = dim;
  for (std::size_t i = 0; i < n_attrs; ++i) {
    const std::string name = "attr" + std::to_string(i);
    auto row = draw_row(name);
    std::vector<Real> typed(row.begin(), row.end());
    space.attr_names.push_back(name);
    space.attr_rows.push_back(constant<Real>({dim}, std::move(typed)));
  }
  for (std::size_t i = 0; i < n_objs; ++i) {
    const std::string name = "obj" + std::to_string(i);
    auto row = draw_row(name);
    std::vector<Real> typed(row.begin(), row.end());
    space.obj_names.push_back(name);
    space.obj_rows.push_back(constant<Real>({dim}, std::move(typed)));
  }
  return space;
}

// MLP(Concat(s_a, s_o)); differentiable through the composer parameters.
template <class Real>
TensorPtr<Real> compose_embedding(const TensorPtr<Real>& s_a, const TensorPtr<Real>& s_o,
                                  const Mlp<Real>& composer) {
  if (composer.input_width() != s_a->numel() + s_o->numel()) {
    throw std::runtime_error("compose_embedding: composer expects width " +
                             std::to_string(composer.input_width()) + ", got " +
                             std::to_string(s_a->numel() + s_o->numel()));
  }
  return mlp_forward(composer, concat(s_a, s_o));
}

template <class Real>
std::vector<TensorPtr<Real>> candidate_embeddings(const SemanticSpace<Real>& space,
                                                  const CompositionCatalog& catalog,
                                                  const Mlp<Real>& composer) {
  validate_catalog(catalog, space);
  std::vector<TensorPtr<Real>> rows;
  rows.reserve(catalog.size());
  for (const auto& [a, o] : catalog.pairs) {
    rows.push_back(compose_embedding(space.attr_rows[a], space.obj_rows[o], composer));
  }
  return rows;
}

}  // namespace cscnet

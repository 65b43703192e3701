#pragma once

// Model checkpoint: ASCII "czsl-ckpt v1\n", the dims record (d_x, d, d_v,
// d_c, hidden as little-endian u64, then one byte per classifier kind),
// then each network in declared field order as a length-prefixed blob of
// little-endian f64 (w1, b1, w2, b2 concatenated row-major). Loading
// validates the total length.

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cscnet/data.hpp"
#include "cscnet/model.hpp"

namespace cscnet {

inline constexpr const char* kCheckpointMagic = "czsl-ckpt v1\n";

template <class Real>
void save_checkpoint(const CscNet<Real>& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open '" + path + "' for writing");
  detail::write_bytes(out, kCheckpointMagic, std::strlen(kCheckpointMagic));
  detail::write_u64_le(out, model.dims.d_x);
  detail::write_u64_le(out, model.dims.d);
  detail::write_u64_le(out, model.dims.d_v);
  detail::write_u64_le(out, model.dims.d_c);
  detail::write_u64_le(out, model.dims.hidden);
  const unsigned char prim = model.primitive_cls == ClassifierKind::parametric ? 0 : 1;
  const unsigned char comp = model.composition_cls == ClassifierKind::parametric ? 0 : 1;
  detail::write_bytes(out, &prim, 1);
  detail::write_bytes(out, &comp, 1);
  for (const auto& [name, net] : model.named_networks()) {
    std::uint64_t count = 0;
    for (const auto& p : net.params()) count += p->numel();
    detail::write_u64_le(out, count);
    for (const auto& p : net.params()) {
      for (Real v : p->values) detail::write_f64_le(out, static_cast<double>(v));
    }
  }
  if (!out) throw std::runtime_error("save_checkpoint: write to '" + path + "' failed");
}

template <class Real>
CscNet<Real> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
  detail::expect_magic(in, kCheckpointMagic, "load_checkpoint");
  ModelDims dims;
  dims.d_x = detail::read_u64_le(in, "load_checkpoint");
  dims.d = detail::read_u64_le(in, "load_checkpoint");
  dims.d_v = detail::read_u64_le(in, "load_checkpoint");
  dims.d_c = detail::read_u64_le(in, "load_checkpoint");
  dims.hidden = detail::read_u64_le(in, "load_checkpoint");
  unsigned char kinds[2];
  in.read(reinterpret_cast<char*>(kinds), 2);
  if (in.gcount() != 2) throw std::runtime_error("load_checkpoint: truncated file");
  if (kinds[0] > 1 || kinds[1] > 1) throw std::runtime_error("load_checkpoint: bad classifier kind byte");

  auto model = CscNet<Real>::init(dims,
                                  kinds[0] == 0 ? ClassifierKind::parametric : ClassifierKind::nonparametric,
                                  kinds[1] == 0 ? ClassifierKind::parametric : ClassifierKind::nonparametric,
                                  /*seed=*/0);
  for (const auto& [name, net] : model.named_networks()) {
    std::uint64_t expected = 0;
    for (const auto& p : net.params()) expected += p->numel();
    const std::uint64_t count = detail::read_u64_le(in, "load_checkpoint");
    if (count != expected) {
      throw std::runtime_error("load_checkpoint: network '" + name + "' has " + std::to_string(count) +
                               " values, expected " + std::to_string(expected));
    }
    for (const auto& p : net.params()) {
      for (Real& v : p->values) v = static_cast<Real>(detail::read_f64_le(in, "load_checkpoint"));
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error("load_checkpoint: trailing bytes after the last network");
  }
  return model;
}

}  // namespace cscnet

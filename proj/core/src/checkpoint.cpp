#include "hsam/checkpoint.hpp"

#include <cstring>

#include "io_util.hpp"

namespace hsam {

namespace {

using detail::ByteReader;
using detail::ByteWriter;

void write_params(ByteWriter& w, const ParamVector& pv) {
  w.raw("HSAM", 4);
  w.pod<std::uint32_t>(kParamFormatVersion);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(pv.layout.entries.size()));
  for (const auto& e : pv.layout.entries) {
    w.str(e.name);
    w.pod<std::uint8_t>(static_cast<std::uint8_t>(e.block));
    w.pod<std::int64_t>(e.offset);
    w.pod<std::uint8_t>(static_cast<std::uint8_t>(e.shape.size()));
    for (auto d : e.shape) w.pod<std::int64_t>(d);
  }
  // raw blocks: theta then phi, then batch-norm running state if present
  w.raw(pv.theta.data(), static_cast<std::size_t>(pv.theta.numel()) * sizeof(double));
  w.raw(pv.phi.data(), static_cast<std::size_t>(pv.phi.numel()) * sizeof(double));
  w.pod<std::uint8_t>(pv.state.numel() > 0 ? 1 : 0);
  if (pv.state.numel() > 0) {
    w.raw(pv.state.data(), static_cast<std::size_t>(pv.state.numel()) * sizeof(double));
  }
}

ParamVector read_params(ByteReader& r) {
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, "HSAM", 4) != 0) throw std::runtime_error("not a parameter file (bad magic)");
  const auto version = r.pod<std::uint32_t>();
  if (version != kParamFormatVersion) {
    throw std::runtime_error("parameter format version " + std::to_string(version) + " unsupported");
  }
  ParamVector pv;
  const auto n_entries = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_entries; ++i) {
    LayoutEntry e;
    e.name = r.str();
    e.block = static_cast<Block>(r.pod<std::uint8_t>());
    e.offset = r.pod<std::int64_t>();
    const int rank = r.pod<std::uint8_t>();
    e.shape.resize(static_cast<std::size_t>(rank));
    for (auto& d : e.shape) d = r.pod<std::int64_t>();
    pv.layout.entries.push_back(e);
    std::int64_t* size = e.block == Block::theta   ? &pv.layout.theta_size
                         : e.block == Block::phi   ? &pv.layout.phi_size
                                                   : &pv.layout.state_size;
    *size += shape_numel(e.shape);
  }
  pv.layout.validate();
  pv.theta = Tensor({pv.layout.theta_size});
  pv.phi = Tensor({pv.layout.phi_size});
  r.raw(pv.theta.data(), static_cast<std::size_t>(pv.theta.numel()) * sizeof(double));
  r.raw(pv.phi.data(), static_cast<std::size_t>(pv.phi.numel()) * sizeof(double));
  const bool has_state = r.pod<std::uint8_t>() != 0;
  pv.state = Tensor({pv.layout.state_size});
  if (has_state) {
    r.raw(pv.state.data(), static_cast<std::size_t>(pv.state.numel()) * sizeof(double));
  }
  return pv;
}

}  // namespace

void save_params(const ParamVector& pv, const std::filesystem::path& path) {
  ByteWriter w;
  write_params(w, pv);
  detail::write_file_crc(path, w.bytes());
}

ParamVector load_params(const std::filesystem::path& path) {
  ByteReader r(detail::read_file_crc(path));
  return read_params(r);
}

void save_checkpoint(const TrainCheckpoint& ck, const std::filesystem::path& path) {
  ByteWriter w;
  write_params(w, ck.pv);
  w.raw("OPT0", 4);
  w.tensor(ck.adam.m_theta);
  w.tensor(ck.adam.v_theta);
  w.tensor(ck.adam.m_phi);
  w.tensor(ck.adam.v_phi);
  w.pod<std::int64_t>(ck.adam.t);
  w.pod<std::int64_t>(ck.iteration);
  w.pod<std::uint32_t>(ck.config_hash);
  w.str(ck.rng_state);
  detail::write_file_crc(path, w.bytes());
}

TrainCheckpoint load_checkpoint(const std::filesystem::path& path, std::uint32_t expected_config_hash) {
  ByteReader r(detail::read_file_crc(path));
  TrainCheckpoint ck;
  ck.pv = read_params(r);
  char tag[4];
  r.raw(tag, 4);
  if (std::memcmp(tag, "OPT0", 4) != 0) throw std::runtime_error("checkpoint missing optimizer section");
  ck.adam.m_theta = r.tensor();
  ck.adam.v_theta = r.tensor();
  ck.adam.m_phi = r.tensor();
  ck.adam.v_phi = r.tensor();
  ck.adam.t = r.pod<std::int64_t>();
  ck.iteration = r.pod<std::int64_t>();
  ck.config_hash = r.pod<std::uint32_t>();
  ck.rng_state = r.str();
  if (ck.config_hash != expected_config_hash) {
    throw std::runtime_error("checkpoint config hash mismatch: resuming under a different configuration");
  }
  return ck;
}

}  // namespace hsam

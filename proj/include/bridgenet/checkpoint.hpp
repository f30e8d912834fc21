/* Copyright 2026 The BridgeNet Kit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Checkpoint file:
//
//   "BNCK" | version u32 | config hash u64 | epoch u32
//   | rng state (u32 length + bytes) | parameter count u32
//   | per parameter: name length u32 + name | rank u32 + extents u32...
//                    | float64 values
//   | CRC32 u32 over every preceding byte
//
// Parameter names are "<role>/<name>" so one file can hold several stores
// (denoiser + recognizer). Optimizer velocities are stored as extra
// parameters named "<role>/<name>@velocity". A trailing "!" on the role
// marks a frozen store.

#ifndef BRIDGENET_CHECKPOINT_HPP_
#define BRIDGENET_CHECKPOINT_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "bridgenet/binary_io.hpp"
#include "bridgenet/errors.hpp"
#include "bridgenet/parameters.hpp"

namespace bridgenet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::vector<ParameterStore> stores;
  std::uint64_t config_hash = 0;
  std::uint32_t epoch = 0;  // completed epochs
  std::string rng_state;

  const ParameterStore& store(StoreRole role) const {
    for (const auto& s : stores) {
      if (s.role() == role) return s;
    }
    throw ConfigError("checkpoint holds no " + std::string(to_string(role)) + " store");
  }
};

namespace detail {

inline StoreRole parse_role(const std::string& s, std::uint64_t offset) {
  for (StoreRole r : {StoreRole::kTeacher, StoreRole::kStudent, StoreRole::kDenoiser,
                      StoreRole::kRecognizer}) {
    if (s == to_string(r)) return r;
  }
  throw FormatError("unknown store role '" + s + "'", offset);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  io::ByteWriter w;
  w.put_bytes("BNCK");
  w.put_u32(kCheckpointVersion);
  w.put_u64(ck.config_hash);
  w.put_u32(ck.epoch);
  w.put_u32(static_cast<std::uint32_t>(ck.rng_state.size()));
  w.put_bytes(ck.rng_state);
  std::uint32_t count = 0;
  for (const auto& s : ck.stores) count += static_cast<std::uint32_t>(2 * s.size());
  w.put_u32(count);
  auto put_param = [&](const std::string& name, const Shape& shape, auto values) {
    w.put_u32(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name);
    w.put_u32(static_cast<std::uint32_t>(shape.size()));
    for (std::size_t e : shape) w.put_u32(static_cast<std::uint32_t>(e));
    for (double v : values) w.put_f64(v);
  };
  for (const auto& s : ck.stores) {
    const std::string role = std::string(to_string(s.role())) + (s.frozen() ? "!" : "");
    for (const auto& e : s.entries()) {
      put_param(role + "/" + e.name, e.value.shape(), e.value.data());
      put_param(role + "/" + e.name + "@velocity", e.value.shape(),
                std::span<const double>(e.velocity));
    }
  }
  w.put_crc();
  return w.bytes();
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (r.get_bytes(4, "magic") != "BNCK") throw FormatError("bad checkpoint magic", 0);
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.get_u32("version");
  if (version != kCheckpointVersion) {
    throw IncompatibleCheckpointError("checkpoint version " + std::to_string(version) +
                                      " at byte " + std::to_string(version_at) +
                                      " is not supported");
  }
  Checkpoint ck;
  ck.config_hash = r.get_u64("config hash");
  ck.epoch = r.get_u32("epoch");
  ck.rng_state = r.get_bytes(r.get_u32("rng state length"), "rng state");
  const std::uint32_t count = r.get_u32("parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.offset();
    std::string name = r.get_bytes(r.get_u32("name length"), "name");
    Shape shape(r.get_u32("rank"));
    for (auto& e : shape) {
      e = r.get_u32("extent");
      if (e == 0) throw FormatError("zero extent in parameter '" + name + "'", r.offset());
    }
    const std::size_t n = shape_numel(shape);
    if (shape.empty() || r.remaining() < n * 8) {
      throw FormatError("truncated parameter '" + name + "'", r.offset());
    }
    std::vector<double> values(n);
    for (double& v : values) v = r.get_f64("parameter values");

    const auto slash = name.find('/');
    if (slash == std::string::npos) throw FormatError("parameter name without role", at);
    std::string role = name.substr(0, slash);
    std::string local = name.substr(slash + 1);
    const bool frozen = !role.empty() && role.back() == '!';
    if (frozen) role.pop_back();
    const StoreRole parsed = detail::parse_role(role, at);

    ParameterStore* store = nullptr;
    for (auto& s : ck.stores) {
      if (s.role() == parsed) store = &s;
    }
    if (!store) {
      ck.stores.emplace_back(parsed);
      store = &ck.stores.back();
    }
    if (frozen) store->freeze();

    constexpr std::string_view kVelocity = "@velocity";
    if (local.size() > kVelocity.size() && local.ends_with(kVelocity)) {
      local.resize(local.size() - kVelocity.size());
      auto& entry = store->entry(local);
      if (entry.value.shape() != shape) throw FormatError("velocity shape mismatch", at);
      entry.velocity = std::move(values);
    } else {
      store->add(local, Tensor::from_data(std::move(shape), std::move(values)));
    }
  }
  r.expect_crc_trailer();
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  io::write_file(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(io::read_file(path));
}

/// Loads and rejects a checkpoint written under a different configuration.
inline Checkpoint load_checkpoint(const std::string& path, std::uint64_t expected_hash) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.config_hash != expected_hash) {
    throw IncompatibleCheckpointError("checkpoint '" + path +
                                      "' was written for a different configuration");
  }
  return ck;
}

}  // namespace bridgenet

#endif  // BRIDGENET_CHECKPOINT_HPP_

// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#include "fplab/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fplab/errors.hpp"
#include "fplab/hash.hpp"

namespace fplab {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written in host order and must be little-endian");

using nlohmann::json;

const Tensor& Checkpoint::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ArgumentError("checkpoint has no tensor named '" + name + "'");
  return it->second;
}

Tensor& Checkpoint::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ArgumentError("checkpoint has no tensor named '" + name + "'");
  return it->second;
}

std::string Checkpoint::arch_id() const {
  auto it = metadata.find(std::string(kArchIdKey));
  if (it != metadata.end()) return it->second;
  return arch_id_of(tensors);
}

Schema schema_of(const TensorMap<float>& tensors) {
  Schema s;
  s.reserve(tensors.size());
  for (const auto& [name, t] : tensors) s.emplace_back(name, t.shape());
  return s;
}

std::string schema_to_string(const Schema& schema) {
  json j = json::array();
  for (const auto& [name, shape] : schema) j.push_back(json::array({name, shape}));
  return j.dump();
}

Schema schema_from_string(std::string_view text) {
  Schema s;
  try {
    const json j = json::parse(text);
    for (const auto& entry : j) s.emplace_back(entry.at(0).get<std::string>(), entry.at(1).get<Shape>());
  } catch (const json::exception& e) {
    throw FormatError(std::string("schema: ") + e.what());
  }
  return s;
}

std::string arch_id_of(const Schema& schema) {
  return sha256_hex(schema_to_string(schema)).substr(0, 16);
}

std::string arch_id_of(const TensorMap<float>& tensors) { return arch_id_of(schema_of(tensors)); }

void stamp_arch_id(Checkpoint& ckpt) { ckpt.metadata[std::string(kArchIdKey)] = arch_id_of(ckpt.tensors); }

void append_lineage(Metadata& metadata, std::string_view entry) {
  auto& lineage = metadata[std::string(kLineageKey)];
  if (!lineage.empty()) lineage += " | ";
  lineage += entry;
}

std::string first_schema_divergence(const Schema& expected, const Schema& actual) {
  const std::size_t n = std::min(expected.size(), actual.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (expected[i] != actual[i]) {
      return "tensor #" + std::to_string(i) + ": expected '" + expected[i].first + "' " +
             shape_str(expected[i].second) + ", found '" + actual[i].first + "' " +
             shape_str(actual[i].second);
    }
  }
  if (expected.size() > n) {
    return "missing tensor '" + expected[n].first + "' " + shape_str(expected[n].second);
  }
  if (actual.size() > n) {
    return "unexpected tensor '" + actual[n].first + "' " + shape_str(actual[n].second);
  }
  return {};
}

void require_homologous(const Checkpoint& a, const Checkpoint& b, std::string_view context) {
  if (a.arch_id() == b.arch_id()) return;
  std::string detail = first_schema_divergence(schema_of(a.tensors), schema_of(b.tensors));
  if (detail.empty()) detail = "arch_id metadata differs";
  throw HomologyError(std::string(context) + ": arch_id " + a.arch_id() + " vs " + b.arch_id() +
                      " (" + detail + ")");
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  json header = json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    const std::uint64_t bytes = t.numel() * sizeof(float);
    header[name] = {{"dtype", "F32"}, {"shape", t.shape()}, {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  if (!ckpt.metadata.empty()) header["__metadata__"] = ckpt.metadata;
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(8 + text.size() + offset);
  const std::uint64_t n = text.size();
  std::memcpy(out.data(), &n, 8);
  std::memcpy(out.data() + 8, text.data(), text.size());
  std::uint8_t* payload = out.data() + 8 + text.size();
  for (const auto& [name, t] : ckpt.tensors) {
    const std::size_t bytes = t.numel() * sizeof(float);
    std::memcpy(payload, t.data().data(), bytes);
    payload += bytes;
  }
  return out;
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes, std::string_view source) {
  const std::string where(source);
  if (bytes.size() < 8) throw FormatError(where + ": header_length: file shorter than 8 bytes");
  std::uint64_t n = 0;
  std::memcpy(&n, bytes.data(), 8);
  if (n > bytes.size() - 8) {
    throw FormatError(where + ": header_length: " + std::to_string(n) + " exceeds remaining " +
                      std::to_string(bytes.size() - 8) + " bytes");
  }
  json header;
  try {
    header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(n));
  } catch (const json::exception& e) {
    throw FormatError(where + ": header: " + e.what());
  }
  if (!header.is_object()) throw FormatError(where + ": header: not a JSON object");

  const std::span<const std::uint8_t> payload = bytes.subspan(8 + n);
  Checkpoint ckpt;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
  std::vector<std::string> range_names;

  for (const auto& [name, entry] : header.items()) {
    if (name == "__metadata__") {
      if (!entry.is_object()) throw FormatError(where + ": __metadata__: not an object");
      for (const auto& [k, v] : entry.items()) {
        if (!v.is_string()) throw FormatError(where + ": __metadata__." + k + ": not a string");
        ckpt.metadata[k] = v.get<std::string>();
      }
      continue;
    }
    const std::string field = where + ": tensor '" + name + "'";
    if (!entry.is_object()) throw FormatError(field + ": entry is not an object");
    if (!entry.contains("dtype") || entry["dtype"] != "F32") {
      throw FormatError(field + ": dtype: only F32 is supported");
    }
    if (!entry.contains("shape") || !entry["shape"].is_array() || entry["shape"].empty()) {
      throw FormatError(field + ": shape: expected a non-empty array");
    }
    Shape shape;
    for (const auto& d : entry["shape"]) {
      if (!d.is_number_unsigned() || d.get<std::uint64_t>() == 0) {
        throw FormatError(field + ": shape: dimensions must be positive integers");
      }
      shape.push_back(d.get<std::size_t>());
    }
    const auto& offs = entry.value("data_offsets", json());
    if (!offs.is_array() || offs.size() != 2 || !offs[0].is_number_unsigned() ||
        !offs[1].is_number_unsigned()) {
      throw FormatError(field + ": data_offsets: expected [begin, end]");
    }
    const auto begin = offs[0].get<std::uint64_t>();
    const auto end = offs[1].get<std::uint64_t>();
    const std::uint64_t need = shape_numel(shape) * sizeof(float);
    if (end < begin || end - begin != need) {
      throw FormatError(field + ": data_offsets: range of " + std::to_string(end - begin) +
                        " bytes does not match shape " + shape_str(shape));
    }
    if (end > payload.size()) {
      throw FormatError(field + ": data_offsets: end " + std::to_string(end) +
                        " past payload size " + std::to_string(payload.size()));
    }
    std::vector<float> data(shape_numel(shape));
    std::memcpy(data.data(), payload.data() + begin, need);
    ckpt.tensors.emplace(name, Tensor(std::move(shape), std::move(data)));
    ranges.emplace_back(begin, end);
    range_names.push_back(name);
  }

  std::vector<std::size_t> order(ranges.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ranges[a] < ranges[b]; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    const auto& prev = ranges[order[i - 1]];
    const auto& cur = ranges[order[i]];
    if (cur.first < prev.second) {
      throw FormatError(where + ": tensor '" + range_names[order[i]] +
                        "': data_offsets: overlaps tensor '" + range_names[order[i - 1]] + "'");
    }
  }
  if (!ckpt.metadata.count(std::string(kArchIdKey))) stamp_arch_id(ckpt);
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return parse_checkpoint(bytes, path.string());
}

std::string content_hash(const Checkpoint& ckpt) { return sha256_hex(serialize_checkpoint(ckpt)); }

namespace {

std::string short_id(const Checkpoint& c) {
  auto it = c.metadata.find("name");
  if (it != c.metadata.end()) return it->second;
  return content_hash(c).substr(0, 12);
}

}  // namespace

TaskVector task_vector(const Checkpoint& expert, const Checkpoint& base) {
  if (expert.arch_id() != base.arch_id()) {
    std::string detail = first_schema_divergence(schema_of(base.tensors), schema_of(expert.tensors));
    throw HomologyError("task_vector: expert arch_id " + expert.arch_id() + " differs from base " +
                        base.arch_id() + (detail.empty() ? "" : " (" + detail + ")"));
  }
  TaskVector tv;
  tv.expert_id = short_id(expert);
  tv.base_id = short_id(base);
  for (const auto& [name, e] : expert.tensors) {
    auto it = base.tensors.find(name);
    if (it == base.tensors.end()) {
      tv.warnings.push_back("tensor '" + name + "' only in expert; skipped");
      continue;
    }
    if (it->second.shape() != e.shape()) {
      throw ShapeError("task_vector: tensor '" + name + "' has shape " + shape_str(e.shape()) +
                       " in expert but " + shape_str(it->second.shape()) + " in base");
    }
    tv.deltas.emplace(name, sub(e, it->second));
  }
  for (const auto& [name, b] : base.tensors) {
    if (!expert.contains(name)) tv.warnings.push_back("tensor '" + name + "' only in base; skipped");
  }
  return tv;
}

Checkpoint apply_delta(const Checkpoint& base, const TaskVector& tv, double weight) {
  Checkpoint out = base;
  const float w = static_cast<float>(weight);
  for (const auto& [name, delta] : tv.deltas) {
    auto it = out.tensors.find(name);
    if (it == out.tensors.end()) {
      throw ShapeError("apply_delta: base has no tensor '" + name + "'");
    }
    if (it->second.shape() != delta.shape()) {
      throw ShapeError("apply_delta: tensor '" + name + "' has shape " +
                       shape_str(it->second.shape()) + " but delta is " + shape_str(delta.shape()));
    }
    axpy(it->second, delta, w);
    if (!all_finite(it->second)) throw DivergenceError("apply_delta: non-finite result in '" + name + "'");
  }
  std::ostringstream entry;
  entry << "apply_delta(" << tv.expert_id << "-" << tv.base_id << ", w=" << weight << ")";
  append_lineage(out.metadata, entry.str());
  return out;
}

}  // namespace fplab

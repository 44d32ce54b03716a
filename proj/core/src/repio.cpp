// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

#include "tommer/repio.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "tommer/error.hpp"

namespace tommer {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr std::string_view kTensorMagic = "TOMR";
constexpr std::string_view kCheckpointMagic = "TOMC";

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::string_view bytes, std::size_t pos) {
  unsigned char raw[sizeof(T)];
  std::memcpy(raw, bytes.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(raw[i], raw[sizeof(T) - 1 - i]);
  }
  T value;
  std::memcpy(&value, raw, sizeof(T));
  return value;
}

void put_floats(std::string& out, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(float));
  } else {
    for (float v : values) put_le(out, v);
  }
}

std::vector<float> get_floats(std::string_view bytes, std::size_t pos, std::size_t count) {
  std::vector<float> values(count);
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(values.data(), bytes.data() + pos, count * sizeof(float));
  } else {
    for (std::size_t i = 0; i < count; ++i) values[i] = get_le<float>(bytes, pos + 4 * i);
  }
  return values;
}

bool all_finite(std::span<const float> values) {
  for (float v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

}  // namespace

// ---------------------------------------------------------------------------
// Raw files
// ---------------------------------------------------------------------------

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return std::move(buf).str();
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// TOMR tensors
// ---------------------------------------------------------------------------

std::string encode_tensor(const TensorF32& tensor) {
  std::string out;
  out.reserve(tensor_file_size(tensor.rank(), tensor.numel()));
  out.append(kTensorMagic);
  put_le<std::uint32_t>(out, kTensorFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
  for (std::size_t d : tensor.shape()) put_le<std::uint64_t>(out, d);
  put_floats(out, tensor.data());
  return out;
}

TensorF32 decode_tensor(std::string_view bytes) {
  if (bytes.size() < 12 || bytes.substr(0, 4) != kTensorMagic) throw FormatError("bad magic: not a TOMR tensor");
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kTensorFormatVersion) throw FormatError("unsupported TOMR version " + std::to_string(version));
  const auto ndim = get_le<std::uint32_t>(bytes, 8);
  if (ndim == 0) throw FormatError("TOMR tensor with empty shape");
  if (bytes.size() < 12 + 8 * static_cast<std::size_t>(ndim)) throw FormatError("truncated TOMR header");

  std::vector<std::size_t> shape(ndim);
  std::size_t numel = 1;
  for (std::uint32_t a = 0; a < ndim; ++a) {
    const auto d = get_le<std::uint64_t>(bytes, 12 + 8 * a);
    if (d == 0) throw FormatError("TOMR dim " + std::to_string(a) + " is zero");
    if (d > std::numeric_limits<std::size_t>::max() / 4 / numel) throw FormatError("TOMR dims overflow");
    shape[a] = static_cast<std::size_t>(d);
    numel *= shape[a];
  }
  const std::size_t header = 12 + 8 * static_cast<std::size_t>(ndim);
  if (bytes.size() - header != numel * 4) {
    throw FormatError("payload length mismatch: expected " + std::to_string(numel * 4) + " bytes, found " +
                      std::to_string(bytes.size() - header));
  }
  auto data = get_floats(bytes, header, numel);
  if (!all_finite(data)) throw FormatError("TOMR payload contains NaN or Inf");
  return TensorF32(std::move(shape), std::move(data));
}

TensorF32 read_tensor(const std::filesystem::path& path) {
  try {
    return decode_tensor(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_tensor(const TensorF32& tensor, const std::filesystem::path& path) {
  write_file_bytes(path, encode_tensor(tensor));
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

namespace {

AnnotatedSequence parse_record(const json& rec, std::size_t line_no, std::vector<std::string>* warnings) {
  const auto where = "line " + std::to_string(line_no) + ": ";
  if (!rec.is_object()) throw FormatError(where + "record is not a JSON object");
  AnnotatedSequence seq;
  try {
    seq.seq_id = rec.at("seq_id").get<std::string>();
    const auto& n = rec.at("n_tokens");
    if (!n.is_number_integer() || n.get<long long>() <= 0) throw FormatError(where + "n_tokens must be positive");
    seq.n_tokens = n.get<std::size_t>();
    seq.rep_file = rec.at("rep_file").get<std::string>();
    if (auto it = rec.find("token_texts"); it != rec.end() && !it->is_null()) {
      seq.token_texts = it->get<std::vector<std::string>>();
      if (seq.token_texts->size() != seq.n_tokens) {
        throw FormatError(where + "token_texts length differs from n_tokens");
      }
    }
    const auto& mentions = rec.at("mentions");
    if (!mentions.is_array()) throw FormatError(where + "mentions must be an array");
    for (const auto& m : mentions) {
      if (!m.is_array() || (m.size() != 2 && m.size() != 3) || !m[0].is_number_integer() ||
          !m[1].is_number_integer()) {
        throw FormatError(where + "mention must be [start, end] or [start, end, type]");
      }
      const long long s = m[0].get<long long>();
      const long long e = m[1].get<long long>();
      if (s < 1 || e < s || e > static_cast<long long>(seq.n_tokens)) {
        throw FormatError(where + "span out of range [" + std::to_string(s) + "," + std::to_string(e) + "] for " +
                          std::to_string(seq.n_tokens) + " tokens");
      }
      const Span span{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(e)};
      if (!seq.mentions.insert(span).second) {
        if (warnings) {
          warnings->push_back(where + "duplicate mention [" + std::to_string(s) + "," + std::to_string(e) +
                              "] in " + seq.seq_id + " dropped");
        }
        continue;
      }
      if (m.size() == 3) seq.mention_types.emplace(span, m[2].get<std::string>());
    }
    if (!seq.mention_types.empty() && seq.mention_types.size() != seq.mentions.size()) {
      throw FormatError(where + "typed and untyped mentions mixed in one record");
    }
  } catch (const json::exception& e) {
    throw FormatError(where + e.what());
  }
  return seq;
}

}  // namespace

std::vector<AnnotatedSequence> parse_dataset(std::istream& in, std::vector<std::string>* warnings) {
  std::vector<AnnotatedSequence> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    out.push_back(parse_record(rec, line_no, warnings));
  }
  return out;
}

std::vector<AnnotatedSequence> read_dataset(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  try {
    return parse_dataset(in, warnings);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_dataset(std::span<const AnnotatedSequence> sequences, std::ostream& out) {
  for (const auto& seq : sequences) {
    ordered_json rec;
    rec["seq_id"] = seq.seq_id;
    rec["n_tokens"] = seq.n_tokens;
    auto mentions = ordered_json::array();
    for (const Span& s : seq.mentions) {
      auto m = ordered_json::array({s.start, s.end});
      if (auto it = seq.mention_types.find(s); it != seq.mention_types.end()) m.push_back(it->second);
      mentions.push_back(std::move(m));
    }
    rec["mentions"] = std::move(mentions);
    rec["rep_file"] = seq.rep_file;
    if (seq.token_texts) rec["token_texts"] = *seq.token_texts;
    out << rec.dump() << '\n';
  }
}

void write_dataset(std::span<const AnnotatedSequence> sequences, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_dataset(sequences, out);
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// TOMC checkpoints
// ---------------------------------------------------------------------------

const CheckpointBlob& Checkpoint::blob(std::string_view name) const {
  for (const auto& b : blobs) {
    if (b.name == name) return b;
  }
  throw FormatError("checkpoint has no blob named " + std::string(name));
}

std::optional<std::vector<std::pair<std::string, std::vector<std::size_t>>>> expected_probe_blobs(
    std::string_view kind, std::string_view metadata) {
  using Layout = std::vector<std::pair<std::string, std::vector<std::size_t>>>;
  if (kind != "tom" && kind != "ltqk" && kind != "lcattn") return std::nullopt;
  json meta;
  try {
    meta = json::parse(metadata);
    const auto d = meta.at("model_dim").get<std::size_t>();
    if (kind == "tom") {
      const auto r = meta.at("rank").get<std::size_t>();
      return Layout{{"query", {r, d}}, {"key", {r, d}}, {"value", {d}}, {"theta", {5}}};
    }
    if (kind == "ltqk") {
      const auto r = meta.at("rank").get<std::size_t>();
      const auto h = meta.at("num_heads").get<std::size_t>();
      const auto dh = meta.at("head_dim").get<std::size_t>();
      return Layout{{"query", {h, r, dh}}, {"key", {h, r, dh}}, {"value", {d}}, {"theta", {5}}};
    }
    const auto layers = meta.at("num_layers").get<std::size_t>();
    const auto h = meta.at("num_heads").get<std::size_t>();
    return Layout{{"weights", {layers, h}}, {"value", {d}}, {"theta", {5}}};
  } catch (const json::exception& e) {
    throw FormatError(std::string("probe checkpoint metadata: ") + e.what());
  }
}

std::string encode_checkpoint(const Checkpoint& checkpoint) {
  json manifest;
  try {
    manifest = json::parse(checkpoint.metadata);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("checkpoint metadata is not JSON: ") + e.what());
  }
  if (!manifest.is_object()) throw FormatError("checkpoint metadata must be a JSON object");
  manifest["kind"] = checkpoint.kind;
  auto table = json::array();
  for (const auto& b : checkpoint.blobs) {
    if (product(b.shape) != b.data.size() || b.shape.empty()) {
      throw FormatError("blob " + b.name + " data does not match its shape");
    }
    table.push_back({{"name", b.name}, {"shape", b.shape}});
  }
  manifest["blobs"] = std::move(table);
  const std::string text = manifest.dump();

  std::string out;
  out.append(kCheckpointMagic);
  put_le<std::uint32_t>(out, kCheckpointFormatVersion);
  put_le<std::uint64_t>(out, text.size());
  out.append(text);
  for (const auto& b : checkpoint.blobs) put_floats(out, b.data);
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 16 || bytes.substr(0, 4) != kCheckpointMagic) throw FormatError("bad magic: not a TOMC checkpoint");
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kCheckpointFormatVersion) throw FormatError("unsupported TOMC version " + std::to_string(version));
  const auto manifest_len = get_le<std::uint64_t>(bytes, 8);
  if (manifest_len > bytes.size() - 16) throw FormatError("truncated TOMC manifest");

  json manifest;
  try {
    manifest = json::parse(bytes.substr(16, manifest_len));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("TOMC manifest is not JSON: ") + e.what());
  }

  Checkpoint ckpt;
  std::vector<std::pair<std::string, std::vector<std::size_t>>> table;
  try {
    ckpt.kind = manifest.at("kind").get<std::string>();
    for (const auto& entry : manifest.at("blobs")) {
      table.emplace_back(entry.at("name").get<std::string>(), entry.at("shape").get<std::vector<std::size_t>>());
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("TOMC manifest: ") + e.what());
  }
  manifest.erase("kind");
  manifest.erase("blobs");
  ckpt.metadata = manifest.dump();

  if (auto expected = expected_probe_blobs(ckpt.kind, ckpt.metadata)) {
    if (*expected != table) {
      throw FormatError("manifest/blob mismatch: " + ckpt.kind + " blob shapes disagree with declared rank and dims");
    }
  }

  std::size_t payload = 0;
  for (const auto& [name, shape] : table) {
    if (shape.empty()) throw FormatError("blob " + name + " has empty shape");
    payload += product(shape) * 4;
  }
  const std::size_t offset = 16 + manifest_len;
  if (bytes.size() - offset != payload) {
    throw FormatError("manifest/blob mismatch: manifest declares " + std::to_string(payload) + " payload bytes, found " +
                      std::to_string(bytes.size() - offset));
  }
  std::size_t pos = offset;
  for (auto& [name, shape] : table) {
    const std::size_t n = product(shape);
    CheckpointBlob blob{name, shape, get_floats(bytes, pos, n)};
    if (!all_finite(blob.data)) throw FormatError("blob " + name + " contains NaN or Inf");
    pos += n * 4;
    ckpt.blobs.push_back(std::move(blob));
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace tommer

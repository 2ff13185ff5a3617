// Copyright 2026 The MFHCA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mfhca/feature_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mfhca/errors.hpp"

namespace mfhca {

namespace {

void put_u16(std::string& s, uint16_t v) {
  s.push_back(char(v & 0xff));
  s.push_back(char((v >> 8) & 0xff));
}
void put_u32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(char((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& s, float f) {
  uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(s, v);
}

struct Reader {
  const uint8_t* p;
  size_t len;
  size_t pos = 0;
  std::string path;

  void need(size_t n, const char* what) {
    if (pos + n > len)
      throw ValidationError(path + ": truncated file while reading " + what);
  }
  uint16_t u16(const char* what) {
    need(2, what);
    uint16_t v = uint16_t(p[pos]) | uint16_t(p[pos + 1]) << 8;
    pos += 2;
    return v;
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = uint32_t(p[pos]) | uint32_t(p[pos + 1]) << 8 | uint32_t(p[pos + 2]) << 16 |
                 uint32_t(p[pos + 3]) << 24;
    pos += 4;
    return v;
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return p[pos++];
  }
  float f32(const char* what) {
    const uint32_t v = u32(what);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }
  std::string str(size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(p + pos), n);
    pos += n;
    return s;
  }
};

std::vector<uint8_t> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  return std::vector<uint8_t>((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
}

void spill(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("short write to file: " + path);
}

}  // namespace

void write_feature_file(const std::string& path, const FeatureSequence& seq) {
  if (seq.rows < 1)
    throw ValidationError("write_feature_file: zero rows");
  if (static_cast<size_t>(seq.rows) * seq.cols != seq.values.size())
    throw ValidationError("write_feature_file: value count does not match rows*cols");
  std::string out = "MFH1";
  put_u32(out, static_cast<uint32_t>(seq.rows));
  put_u32(out, static_cast<uint32_t>(seq.cols));
  for (float v : seq.values) put_f32(out, v);
  spill(path, out);
}

FeatureSequence read_feature_file(const std::string& path) {
  auto bytes = slurp(path);
  Reader r{bytes.data(), bytes.size(), 0, path};
  const std::string magic = r.str(4, "magic");
  if (magic != "MFH1")
    throw ValidationError(path + ": bad magic '" + magic + "', expected 'MFH1'");
  const uint32_t rows = r.u32("rows");
  const uint32_t cols = r.u32("cols");
  if (rows == 0) throw ValidationError(path + ": feature file has zero rows");
  const size_t expected = 12 + size_t(4) * rows * cols;
  if (bytes.size() != expected)
    throw ValidationError(path + ": truncated payload, " + std::to_string(bytes.size()) +
                          " bytes but " + std::to_string(rows) + "x" + std::to_string(cols) +
                          " needs " + std::to_string(expected));
  FeatureSequence seq;
  seq.rows = static_cast<int>(rows);
  seq.cols = static_cast<int>(cols);
  seq.values.resize(size_t(rows) * cols);
  for (auto& v : seq.values) {
    v = r.f32("values");
    if (!std::isfinite(v))
      throw ValidationError(path + ": feature file contains non-finite values");
  }
  return seq;
}

int label_index(const std::string& label) {
  for (size_t i = 0; i < kEmotionLabels.size(); ++i)
    if (label == kEmotionLabels[i]) return static_cast<int>(i);
  if (label == "excited")
    throw ValidationError(
        "label 'excited' is not accepted: pre-merge excited into 'happy' in the manifest");
  std::string valid;
  for (const char* l : kEmotionLabels) valid += std::string(" ") + l;
  throw ValidationError("unknown label '" + label + "'; valid labels are" + valid);
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest: " + path);
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen_ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(lineno) +
                            ": malformed JSON line: " + e.what());
    }
    ManifestEntry e;
    try {
      e.utterance_id = j.at("utterance_id").get<std::string>();
      e.speaker_id = j.at("speaker_id").get<std::string>();
      e.session = j.at("session").get<std::string>();
      e.label = j.at("label").get<std::string>();
      e.wav_path = j.at("wav_path").get<std::string>();
      e.feature_path = j.at("feature_path").get<std::string>();
    } catch (const nlohmann::json::exception& ex) {
      throw ValidationError(path + ":" + std::to_string(lineno) +
                            ": missing or invalid field: " + ex.what());
    }
    try {
      label_index(e.label);
    } catch (const ValidationError& ex) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": " + ex.what());
    }
    if (e.wav_path.empty() || e.feature_path.empty())
      throw ValidationError(path + ":" + std::to_string(lineno) + ": empty path field");
    if (!seen_ids.insert(e.utterance_id).second)
      throw ValidationError(path + ":" + std::to_string(lineno) +
                            ": duplicate utterance_id '" + e.utterance_id + "'");
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ostringstream os;
  for (const auto& e : entries) {
    nlohmann::json j{{"utterance_id", e.utterance_id}, {"speaker_id", e.speaker_id},
                     {"session", e.session},           {"label", e.label},
                     {"wav_path", e.wav_path},         {"feature_path", e.feature_path}};
    os << j.dump() << "\n";
  }
  spill(path, os.str());
}

void write_checkpoint_file(const std::string& path, const std::vector<TensorRecord>& records) {
  std::string out = "MFC1";
  put_u32(out, static_cast<uint32_t>(records.size()));
  for (const auto& rec : records) {
    if (rec.name.size() > 0xffff)
      throw ValidationError("checkpoint entry name too long: " + rec.name);
    uint64_t numel = 1;
    for (uint32_t d : rec.dims) numel *= d;
    if (numel != rec.data.size())
      throw ValidationError("checkpoint entry '" + rec.name +
                            "' data does not match its dims");
    put_u16(out, static_cast<uint16_t>(rec.name.size()));
    out += rec.name;
    out.push_back(char(rec.dims.size()));
    for (uint32_t d : rec.dims) put_u32(out, d);
    for (float v : rec.data) put_f32(out, v);
  }
  spill(path, out);
}

std::vector<TensorRecord> read_checkpoint_file(const std::string& path) {
  auto bytes = slurp(path);
  Reader r{bytes.data(), bytes.size(), 0, path};
  const std::string magic = r.str(4, "magic");
  if (magic != "MFC1")
    throw ValidationError(path + ": bad magic '" + magic + "', expected 'MFC1'");
  const uint32_t count = r.u32("entry count");
  std::vector<TensorRecord> records;
  records.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    TensorRecord rec;
    const uint16_t name_len = r.u16("name length");
    rec.name = r.str(name_len, "name");
    const uint8_t ndim = r.u8("ndim");
    uint64_t numel = 1;
    for (uint8_t d = 0; d < ndim; ++d) {
      rec.dims.push_back(r.u32("dims"));
      numel *= rec.dims.back();
    }
    rec.data.resize(numel);
    for (auto& v : rec.data) v = r.f32("tensor data");
    records.push_back(std::move(rec));
  }
  if (r.pos != bytes.size())
    throw ValidationError(path + ": trailing bytes after last checkpoint entry");
  return records;
}

}  // namespace mfhca

#include "usamkit/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "usamkit/backend.hpp"
#include "usamkit/error.hpp"
#include "usamkit/sampling.hpp"

namespace usamkit {

namespace {

constexpr char kBase64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int base64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

std::vector<uint8_t> floats_to_bytes(std::span<const double> values) {
  std::vector<uint8_t> bytes;
  bytes.reserve(values.size() * 4);
  for (double v : values) {
    const uint32_t u = std::bit_cast<uint32_t>(float(v));
    bytes.push_back(uint8_t(u & 0xff));
    bytes.push_back(uint8_t((u >> 8) & 0xff));
    bytes.push_back(uint8_t((u >> 16) & 0xff));
    bytes.push_back(uint8_t((u >> 24) & 0xff));
  }
  return bytes;
}

std::vector<double> bytes_to_floats(std::span<const uint8_t> bytes) {
  if (bytes.size() % 4 != 0)
    throw Error("payload length " + std::to_string(bytes.size()) +
                " is not a whole number of 32-bit floats");
  std::vector<double> out(bytes.size() / 4);
  for (size_t i = 0; i < out.size(); ++i) {
    const uint32_t u = uint32_t(bytes[4 * i]) |
                       (uint32_t(bytes[4 * i + 1]) << 8) |
                       (uint32_t(bytes[4 * i + 2]) << 16) |
                       (uint32_t(bytes[4 * i + 3]) << 24);
    out[i] = double(std::bit_cast<float>(u));
  }
  return out;
}

int aug_index_from_name(std::string_view name) {
  const auto augs = standard_augmentations();
  for (int i = 0; i < kNumAugs; ++i)
    if (name == aug_name(augs[size_t(i)].kind)) return i;
  throw Error("unknown augmentation '" + std::string(name) + "'");
}

ModelId model_id_from_name(std::string_view name) {
  for (int i = 0; i < kNumModels; ++i)
    if (name == model_name(ModelId(i))) return ModelId(i);
  throw Error("unknown model '" + std::string(name) + "'");
}

// at() with the field name folded into the error.
const nlohmann::json& field(const nlohmann::json& obj, const char* name) {
  const auto it = obj.find(name);
  if (it == obj.end())
    throw Error(std::string("field '") + name + "': missing");
  return *it;
}

template <typename T>
T field_as(const nlohmann::json& obj, const char* name) {
  try {
    return field(obj, name).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("field '") + name + "': " + e.what());
  }
}

// Prefixes errors from `fn` with the field name unless already tagged.
template <typename Fn>
auto in_field(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    const std::string msg = e.what();
    if (msg.rfind("field ", 0) == 0) throw;
    throw Error(std::string("field '") + name + "': " + msg);
  }
}

SampleSet parse_set(const nlohmann::json& j) {
  SampleSet set;
  set.image_id = field_as<std::string>(j, "image_id");
  const int height = field_as<int>(j, "height");
  const int width = field_as<int>(j, "width");
  if (height < 1 || width < 1)
    throw Error("field 'height': dimensions must be positive");
  set.n_prompts = field_as<int>(j, "n_prompts");
  if (set.n_prompts < 1)
    throw Error("field 'n_prompts': must be at least 1");

  RleMask rle;
  rle.counts = field_as<std::vector<int64_t>>(j, "gt_rle");
  try {
    set.gt = rle_decode(rle, height, width);
  } catch (const Error& e) {
    throw Error(std::string("field 'gt_rle': ") + e.what());
  }

  const nlohmann::json& records = field(j, "records");
  if (!records.is_array()) throw Error("field 'records': expected an array");
  set.records.reserve(records.size());
  size_t idx = 0;
  for (const auto& rj : records) {
    try {
      SampleRecord rec;
      rec.config.aug_index = in_field("aug", [&] {
        return aug_index_from_name(field_as<std::string>(rj, "aug"));
      });
      rec.config.prompt_index = field_as<int>(rj, "prompt_index");
      if (rec.config.prompt_index < kRefinedPromptIndex ||
          rec.config.prompt_index >= set.n_prompts)
        throw Error("field 'prompt_index': " +
                    std::to_string(rec.config.prompt_index) +
                    " outside [-1, " + std::to_string(set.n_prompts) + ")");
      rec.config.model = in_field("model", [&] {
        return model_id_from_name(field_as<std::string>(rj, "model"));
      });
      rec.config.head = field_as<int>(rj, "head");
      if (rec.config.head < 0 || rec.config.head >= kNumHeads)
        throw Error("field 'head': " + std::to_string(rec.config.head) +
                    " outside [0, " + std::to_string(kNumHeads) + ")");
      rec.sam_score = field_as<double>(rj, "sam_score");
      if (!std::isfinite(rec.sam_score) || rec.sam_score < 0.0 ||
          rec.sam_score > 1.0)
        throw Error("field 'sam_score': must be in [0, 1]");

      auto mask_values = in_field("mask_b64", [&] {
        return bytes_to_floats(
            base64_decode(field_as<std::string>(rj, "mask_b64")));
      });
      if (mask_values.size() != size_t(height) * size_t(width))
        throw Error("field 'mask_b64': " + std::to_string(mask_values.size()) +
                    " values for a " + std::to_string(height) + "x" +
                    std::to_string(width) + " mask");
      rec.mask.height = height;
      rec.mask.width = width;
      rec.mask.data = std::move(mask_values);
      for (double v : rec.mask.data)
        if (!std::isfinite(v) || v < 0.0 || v > 1.0)
          throw Error("field 'mask_b64': probabilities must be in [0, 1]");

      rec.tokens = in_field("tokens_b64", [&] {
        return bytes_to_floats(
            base64_decode(field_as<std::string>(rj, "tokens_b64")));
      });
      if (rec.tokens.size() != size_t(kTokenDim))
        throw Error("field 'tokens_b64': tokens have " +
                    std::to_string(rec.tokens.size()) + " dims, expected " +
                    std::to_string(kTokenDim));
      set.records.push_back(std::move(rec));
    } catch (const Error& e) {
      throw Error("records[" + std::to_string(idx) + "]: " + e.what());
    }
    ++idx;
  }
  return set;
}

nlohmann::json set_to_json(const SampleSet& set) {
  nlohmann::json j;
  j["image_id"] = set.image_id;
  j["height"] = set.gt.height;
  j["width"] = set.gt.width;
  j["gt_rle"] = rle_encode(set.gt).counts;
  j["n_prompts"] = set.n_prompts;
  nlohmann::json records = nlohmann::json::array();
  const auto augs = standard_augmentations();
  for (const SampleRecord& rec : set.records) {
    if (rec.config.aug_index < 0 || rec.config.aug_index >= kNumAugs)
      throw Error("record in '" + set.image_id +
                  "' has augmentation index " +
                  std::to_string(rec.config.aug_index));
    nlohmann::json rj;
    rj["aug"] = aug_name(augs[size_t(rec.config.aug_index)].kind);
    rj["prompt_index"] = rec.config.prompt_index;
    rj["model"] = model_name(rec.config.model);
    rj["head"] = rec.config.head;
    rj["sam_score"] = rec.sam_score;
    rj["mask_b64"] = base64_encode(floats_to_bytes(rec.mask.data));
    rj["tokens_b64"] = base64_encode(floats_to_bytes(rec.tokens));
    records.push_back(std::move(rj));
  }
  j["records"] = std::move(records);
  return j;
}

}  // namespace

RleMask rle_encode(const BinaryMask& m) {
  RleMask out;
  uint8_t current = 0;
  int64_t run = 0;
  for (uint8_t v : m.data) {
    if (v == current) {
      ++run;
    } else {
      out.counts.push_back(run);
      current = v;
      run = 1;
    }
  }
  out.counts.push_back(run);
  return out;
}

BinaryMask rle_decode(const RleMask& r, int height, int width) {
  if (height < 1 || width < 1)
    throw Error("mask dimensions must be positive");
  const int64_t total = int64_t(height) * int64_t(width);
  int64_t sum = 0;
  for (int64_t c : r.counts) {
    if (c < 0) throw Error("negative run length " + std::to_string(c));
    sum += c;
  }
  if (sum != total)
    throw Error("run lengths sum to " + std::to_string(sum) + ", mask has " +
                std::to_string(total) + " pixels");
  BinaryMask m(height, width);
  size_t pos = 0;
  uint8_t value = 0;
  for (int64_t c : r.counts) {
    for (int64_t i = 0; i < c; ++i) m.data[pos++] = value;
    value = uint8_t(1 - value);
  }
  return m;
}

std::string base64_encode(std::span<const uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const uint32_t v = (uint32_t(bytes[i]) << 16) |
                       (uint32_t(bytes[i + 1]) << 8) | uint32_t(bytes[i + 2]);
    out.push_back(kBase64Alphabet[(v >> 18) & 63]);
    out.push_back(kBase64Alphabet[(v >> 12) & 63]);
    out.push_back(kBase64Alphabet[(v >> 6) & 63]);
    out.push_back(kBase64Alphabet[v & 63]);
  }
  const size_t rest = bytes.size() - i;
  if (rest == 1) {
    const uint32_t v = uint32_t(bytes[i]) << 16;
    out.push_back(kBase64Alphabet[(v >> 18) & 63]);
    out.push_back(kBase64Alphabet[(v >> 12) & 63]);
    out.push_back('=');
    out.push_back('=');
  } else if (rest == 2) {
    const uint32_t v = (uint32_t(bytes[i]) << 16) | (uint32_t(bytes[i + 1]) << 8);
    out.push_back(kBase64Alphabet[(v >> 18) & 63]);
    out.push_back(kBase64Alphabet[(v >> 12) & 63]);
    out.push_back(kBase64Alphabet[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::vector<uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0)
    throw Error("base64 length " + std::to_string(text.size()) +
                " is not a multiple of 4");
  std::vector<uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (size_t i = 0; i < text.size(); i += 4) {
    int vals[4];
    int pad = 0;
    for (size_t k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=') {
        if (i + 4 != text.size() || k < 2)
          throw Error("base64 padding in the middle of the payload");
        vals[k] = 0;
        ++pad;
      } else {
        if (pad > 0) throw Error("base64 data after padding");
        vals[k] = base64_value(c);
        if (vals[k] < 0)
          throw Error(std::string("invalid base64 character '") + c + "'");
      }
    }
    const uint32_t v = (uint32_t(vals[0]) << 18) | (uint32_t(vals[1]) << 12) |
                       (uint32_t(vals[2]) << 6) | uint32_t(vals[3]);
    out.push_back(uint8_t((v >> 16) & 0xff));
    if (pad < 2) out.push_back(uint8_t((v >> 8) & 0xff));
    if (pad < 1) out.push_back(uint8_t(v & 0xff));
  }
  return out;
}

void write_records(const std::string& path, std::span<const SampleSet> sets) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  nlohmann::json header;
  header["schema_version"] = kRecordSchemaVersion;
  out << header.dump() << "\n";
  for (const SampleSet& set : sets) {
    if (set.degenerate)
      throw Error("set '" + set.image_id +
                  "' is a hand-built test set and has no file form");
    out << set_to_json(set).dump() << "\n";
  }
  if (!out) throw Error("short write to '" + path + "'");
}

struct RecordReader::Impl {
  std::ifstream in;
  std::string path;
  size_t line_no = 0;
  bool header_checked = false;
};

RecordReader::RecordReader(const std::string& path) : impl_(new Impl) {
  impl_->in.open(path);
  impl_->path = path;
  if (!impl_->in) {
    delete impl_;
    throw Error("cannot open record file '" + path + "'");
  }
}

RecordReader::~RecordReader() { delete impl_; }

bool RecordReader::next(SampleSet& out) {
  std::string line;
  while (std::getline(impl_->in, line)) {
    ++impl_->line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(impl_->path + ":" + std::to_string(impl_->line_no) + ": " +
                  e.what());
    }
    if (!impl_->header_checked) {
      impl_->header_checked = true;
      int version = 0;
      try {
        version = field_as<int>(j, "schema_version");
      } catch (const Error& e) {
        throw Error(impl_->path + ":1: " + e.what());
      }
      if (version != kRecordSchemaVersion)
        throw Error(impl_->path + ":1: schema version " +
                    std::to_string(version) + ", this build reads " +
                    std::to_string(kRecordSchemaVersion));
      continue;
    }
    try {
      out = parse_set(j);
    } catch (const Error& e) {
      throw Error(impl_->path + ":" + std::to_string(impl_->line_no) + ": " +
                  e.what());
    }
    return true;
  }
  return false;
}

std::vector<SampleSet> read_records(const std::string& path) {
  RecordReader reader(path);
  std::vector<SampleSet> sets;
  SampleSet set;
  while (reader.next(set)) sets.push_back(std::move(set));
  return sets;
}

std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  const auto emit = [&](const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].find_first_of(",\"\n") != std::string::npos)
        throw Error("CSV cell '" + cells[i] + "' contains a delimiter");
      if (i) out << ',';
      out << cells[i];
    }
    out << '\n';
  };
  emit(header);
  for (const auto& row : rows) {
    if (row.size() != header.size())
      throw Error("CSV row has " + std::to_string(row.size()) +
                  " cells, header has " + std::to_string(header.size()) +
                  " cells");
    emit(row);
  }
  if (!out) throw Error("short write to '" + path + "'");
}

}  // namespace usamkit

#include "prada/model/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "prada/util/error.hpp"

namespace prada::model {
namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

void put_double(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

}  // namespace

std::string encode_array_file(const ArrayFile& file) {
  nlohmann::ordered_json header;
  header["format"] = 1;
  header["meta"] = file.meta;
  nlohmann::ordered_json dir = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const NamedArray& a : file.arrays) {
    dir.push_back({{"name", a.name}, {"group", a.group}, {"shape", a.value.shape()}, {"offset", offset}});
    offset += a.value.size() * sizeof(double);
  }
  header["arrays"] = dir;
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const NamedArray& a : file.arrays) {
    for (double d : a.value.data()) put_double(out, d);
  }
  return out;
}

ArrayFile decode_array_file(const std::string& bytes) {
  const std::size_t magic = sizeof(kCheckpointMagic);
  if (bytes.size() < magic + 8 || std::memcmp(bytes.data(), kCheckpointMagic, magic) != 0) {
    throw DataError("not a PRADA1 checkpoint (bad magic)");
  }
  const std::uint64_t header_len = get_u64(bytes, magic);
  const std::size_t data_start = magic + 8 + header_len;
  if (data_start > bytes.size()) throw DataError("checkpoint header truncated");
  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(bytes.substr(magic + 8, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (header.value("format", 0) != 1) throw DataError("unsupported checkpoint format version");

  ArrayFile file;
  file.meta = header.at("meta");
  for (const auto& entry : header.at("arrays")) {
    NamedArray a;
    a.name = entry.at("name").get<std::string>();
    a.group = entry.at("group").get<std::string>();
    const ad::Shape shape = entry.at("shape").get<ad::Shape>();
    const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    const std::size_t count = ad::shape_size(shape);
    if (data_start + offset + count * sizeof(double) > bytes.size()) {
      throw DataError("checkpoint payload truncated at array '" + a.name + "'");
    }
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
      values[i] = std::bit_cast<double>(get_u64(bytes, data_start + offset + i * sizeof(double)));
    }
    a.value = ad::Tensor(shape, std::move(values));
    file.arrays.push_back(std::move(a));
  }
  return file;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_array_file(const std::filesystem::path& path, const ArrayFile& file) {
  write_file_atomic(path, encode_array_file(file));
}

ArrayFile read_array_file(const std::filesystem::path& path) { return decode_array_file(read_file(path)); }

ArrayFile model_to_arrays(const StudentModel& model, nlohmann::ordered_json meta) {
  ArrayFile file;
  file.meta = std::move(meta);
  nlohmann::json cfg = model.config();
  file.meta["model_config"] = cfg;
  for (const Parameter& p : model.parameters()) file.arrays.push_back({p.name, group_name(p.group), p.value});
  return file;
}

StudentModel model_from_arrays(const ArrayFile& file, const ModelConfig* expected) {
  if (!file.meta.contains("model_config")) throw DataError("checkpoint has no model_config");
  const ModelConfig cfg = nlohmann::json(file.meta.at("model_config")).get<ModelConfig>();
  if (expected && (expected->hidden != cfg.hidden || expected->vocab_size != cfg.vocab_size)) {
    throw DataError("checkpoint/config mismatch: checkpoint has H=" + std::to_string(cfg.hidden) +
                    ", |V|=" + std::to_string(cfg.vocab_size) + " but config expects H=" +
                    std::to_string(expected->hidden) + ", |V|=" + std::to_string(expected->vocab_size));
  }
  StudentModel model = StudentModel::initialize(cfg, 0);
  std::size_t seen = 0;
  for (const NamedArray& a : file.arrays) {
    const std::size_t idx = [&] {
      try {
        return model.index_of(a.name);
      } catch (const DataError&) {
        return model.parameters().size();
      }
    }();
    if (idx == model.parameters().size()) continue;  // extra arrays (e.g. optimizer state)
    Parameter& p = model.parameters()[idx];
    if (p.value.shape() != a.value.shape()) {
      throw DataError("checkpoint array '" + a.name + "' has shape " + ad::shape_string(a.value.shape()) +
                      ", model expects " + ad::shape_string(p.value.shape()));
    }
    p.value = a.value;
    ++seen;
  }
  if (seen != model.parameters().size()) throw DataError("checkpoint is missing model parameters");
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const StudentModel& model, nlohmann::ordered_json meta) {
  write_array_file(path, model_to_arrays(model, std::move(meta)));
}

StudentModel load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  return model_from_arrays(read_array_file(path), expected);
}

}  // namespace prada::model

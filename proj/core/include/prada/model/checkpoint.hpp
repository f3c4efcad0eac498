#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prada/autodiff/tensor.hpp"
#include "prada/model/student.hpp"

namespace prada::model {

// On-disk container: the 7 magic bytes "PRADA1\0", a little-endian u64 header
// length, a JSON header (metadata plus a directory of named arrays with byte
// offsets and shapes), then the raw little-endian float64 payload.
inline constexpr char kCheckpointMagic[7] = {'P', 'R', 'A', 'D', 'A', '1', '\0'};

struct NamedArray {
  std::string name;
  std::string group;
  ad::Tensor value;
};

struct ArrayFile {
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  std::vector<NamedArray> arrays;
};

std::string encode_array_file(const ArrayFile& file);
ArrayFile decode_array_file(const std::string& bytes);

// Writes through a temporary file and rename, so readers never see a torn file.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

void write_array_file(const std::filesystem::path& path, const ArrayFile& file);
ArrayFile read_array_file(const std::filesystem::path& path);

ArrayFile model_to_arrays(const StudentModel& model, nlohmann::ordered_json meta = nlohmann::ordered_json::object());
// Rebuilds a model; when `expected` is given, hidden size and vocabulary must
// match it or a DataError naming both configs is thrown.
StudentModel model_from_arrays(const ArrayFile& file, const ModelConfig* expected = nullptr);

void save_checkpoint(const std::filesystem::path& path, const StudentModel& model,
                     nlohmann::ordered_json meta = nlohmann::ordered_json::object());
StudentModel load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

}  // namespace prada::model

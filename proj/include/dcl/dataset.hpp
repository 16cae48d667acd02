#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dcl/tensor.hpp"

namespace dcl {

// One generated benchmark dataset: ground-truth latents, mixed observations,
// and whatever side information the generating system produced.
struct TrajectoryDataset {
  Tensor latents;        // T x d
  Tensor observations;   // T x D (empty until a mixing function is applied)
  std::vector<int> modes;  // length T for switching systems, else empty
  Tensor control;        // T x c, size 0 when the system has no control input
  std::vector<std::pair<std::size_t, std::size_t>> trial_bounds;  // [start, end)
  std::uint64_t seed = 0;

  std::size_t num_steps() const { return latents.rank() == 2 ? latents.rows() : 0; }
  std::size_t latent_dim() const { return latents.rank() == 2 ? latents.cols() : 0; }
  bool has_modes() const { return !modes.empty(); }
  bool has_control() const { return control.size() > 0; }
  std::size_t min_trial_len() const;
  void validate() const;  // throws if the invariants do not hold
};

// ---- container format -------------------------------------------------------
//
// Artifacts are directories: a human-readable `manifest.txt` (whitespace
// key/value lines, `array <name> <dtype> <rank> <dims...>` entries) next to
// raw little-endian binary blobs, one `<name>.bin` per array. JSON sidecars
// (configs, metrics) live in the same directory.

namespace io {

void write_array_f64(const std::filesystem::path& path, const Tensor& t);
Tensor read_array_f64(const std::filesystem::path& path,
                      const std::vector<std::size_t>& shape);
void write_array_i64(const std::filesystem::path& path,
                     const std::vector<std::int64_t>& v);
std::vector<std::int64_t> read_array_i64(const std::filesystem::path& path,
                                         std::size_t count);

struct Manifest {
  std::string format;
  std::vector<std::pair<std::string, std::string>> scalars;
  struct ArrayEntry {
    std::string name;
    std::string dtype;  // "f64" or "i64"
    std::vector<std::size_t> dims;
  };
  std::vector<ArrayEntry> arrays;

  void set(const std::string& key, const std::string& value);
  const std::string* find(const std::string& key) const;
  const ArrayEntry* find_array(const std::string& name) const;
};

void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace io

void save_dataset(const std::filesystem::path& dir, const TrajectoryDataset& ds,
                  const std::string& config_json);
TrajectoryDataset load_dataset(const std::filesystem::path& dir);
std::string load_dataset_config_json(const std::filesystem::path& dir);

}  // namespace dcl

#include "dcl/dataset.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dcl {

std::size_t TrajectoryDataset::min_trial_len() const {
  std::size_t best = num_steps();
  for (const auto& [s, e] : trial_bounds) best = std::min(best, e - s);
  return best;
}

void TrajectoryDataset::validate() const {
  const std::size_t T = num_steps();
  if (trial_bounds.empty()) throw std::runtime_error("dataset: no trials");
  std::size_t cursor = 0;
  for (const auto& [s, e] : trial_bounds) {
    if (s != cursor || e <= s)
      throw std::runtime_error("dataset: trial bounds do not partition [0, T)");
    cursor = e;
  }
  if (cursor != T)
    throw std::runtime_error("dataset: trial bounds do not cover all steps");
  if (has_modes() && modes.size() != T)
    throw std::runtime_error("dataset: mode sequence length mismatch");
  if (has_control() && control.rows() != T)
    throw std::runtime_error("dataset: control length mismatch");
  latents.require_finite("dataset latents");
  if (observations.size() > 0) {
    if (observations.rows() != T)
      throw std::runtime_error("dataset: observation length mismatch");
    observations.require_finite("dataset observations");
  }
}

namespace io {

namespace {

template <typename T>
void write_raw(const std::filesystem::path& path, const T* data, std::size_t n) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for write: " + path.string());
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(n * sizeof(T)));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

template <typename T>
void read_raw(const std::filesystem::path& path, T* data, std::size_t n) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for read: " + path.string());
  in.read(reinterpret_cast<char*>(data),
          static_cast<std::streamsize>(n * sizeof(T)));
  if (in.gcount() != static_cast<std::streamsize>(n * sizeof(T)))
    throw std::runtime_error("short read: " + path.string());
}

}  // namespace

void write_array_f64(const std::filesystem::path& path, const Tensor& t) {
  // Stored as f64 regardless of the in-memory real type.
  std::vector<double> buf(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) buf[i] = static_cast<double>(t[i]);
  write_raw(path, buf.data(), buf.size());
}

Tensor read_array_f64(const std::filesystem::path& path,
                      const std::vector<std::size_t>& shape) {
  Tensor t(shape);
  std::vector<double> buf(t.size());
  read_raw(path, buf.data(), buf.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<real>(buf[i]);
  return t;
}

void write_array_i64(const std::filesystem::path& path,
                     const std::vector<std::int64_t>& v) {
  write_raw(path, v.data(), v.size());
}

std::vector<std::int64_t> read_array_i64(const std::filesystem::path& path,
                                         std::size_t count) {
  std::vector<std::int64_t> v(count);
  read_raw(path, v.data(), count);
  return v;
}

void Manifest::set(const std::string& key, const std::string& value) {
  scalars.emplace_back(key, value);
}

const std::string* Manifest::find(const std::string& key) const {
  for (const auto& [k, v] : scalars)
    if (k == key) return &v;
  return nullptr;
}

const Manifest::ArrayEntry* Manifest::find_array(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path.string());
  out << "format " << m.format << "\n";
  for (const auto& [k, v] : m.scalars) out << k << " " << v << "\n";
  for (const auto& a : m.arrays) {
    out << "array " << a.name << " " << a.dtype << " " << a.dims.size();
    for (auto d : a.dims) out << " " << d;
    out << "\n";
  }
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path.string());
  Manifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "format") {
      ss >> m.format;
    } else if (key == "array") {
      Manifest::ArrayEntry a;
      std::size_t rank = 0;
      ss >> a.name >> a.dtype >> rank;
      for (std::size_t i = 0; i < rank; ++i) {
        std::size_t d = 0;
        ss >> d;
        a.dims.push_back(d);
      }
      if (!ss) throw std::runtime_error("malformed array line in manifest");
      m.arrays.push_back(std::move(a));
    } else {
      std::string value;
      ss >> value;
      m.scalars.emplace_back(key, value);
    }
  }
  return m;
}

}  // namespace io

void save_dataset(const std::filesystem::path& dir, const TrajectoryDataset& ds,
                  const std::string& config_json) {
  std::filesystem::create_directories(dir);
  io::Manifest m;
  m.format = "dcl.dataset.v1";
  m.set("seed", std::to_string(ds.seed));
  m.set("trials", std::to_string(ds.trial_bounds.size()));

  m.arrays.push_back({"latents", "f64", ds.latents.shape()});
  io::write_array_f64(dir / "latents.bin", ds.latents);
  if (ds.observations.size() > 0) {
    m.arrays.push_back({"observations", "f64", ds.observations.shape()});
    io::write_array_f64(dir / "observations.bin", ds.observations);
  }
  if (ds.has_modes()) {
    std::vector<std::int64_t> modes(ds.modes.begin(), ds.modes.end());
    m.arrays.push_back({"modes", "i64", {modes.size()}});
    io::write_array_i64(dir / "modes.bin", modes);
  }
  if (ds.has_control()) {
    m.arrays.push_back({"control", "f64", ds.control.shape()});
    io::write_array_f64(dir / "control.bin", ds.control);
  }
  std::vector<std::int64_t> bounds;
  bounds.reserve(ds.trial_bounds.size() * 2);
  for (const auto& [s, e] : ds.trial_bounds) {
    bounds.push_back(static_cast<std::int64_t>(s));
    bounds.push_back(static_cast<std::int64_t>(e));
  }
  m.arrays.push_back({"trial_bounds", "i64", {ds.trial_bounds.size(), 2}});
  io::write_array_i64(dir / "trial_bounds.bin", bounds);

  io::write_manifest(dir / "manifest.txt", m);

  std::ofstream cfg(dir / "config.json");
  cfg << config_json << "\n";
}

TrajectoryDataset load_dataset(const std::filesystem::path& dir) {
  io::Manifest m = io::read_manifest(dir / "manifest.txt");
  if (m.format != "dcl.dataset.v1")
    throw std::runtime_error("unexpected dataset format: " + m.format);

  TrajectoryDataset ds;
  if (const std::string* s = m.find("seed")) ds.seed = std::stoull(*s);

  const auto* lat = m.find_array("latents");
  if (!lat) throw std::runtime_error("dataset missing latents array");
  ds.latents = io::read_array_f64(dir / "latents.bin", lat->dims);

  if (const auto* obs = m.find_array("observations"))
    ds.observations = io::read_array_f64(dir / "observations.bin", obs->dims);
  if (const auto* modes = m.find_array("modes")) {
    auto raw = io::read_array_i64(dir / "modes.bin", modes->dims[0]);
    ds.modes.assign(raw.begin(), raw.end());
  }
  if (const auto* ctrl = m.find_array("control"))
    ds.control = io::read_array_f64(dir / "control.bin", ctrl->dims);

  const auto* bounds = m.find_array("trial_bounds");
  if (!bounds) throw std::runtime_error("dataset missing trial_bounds array");
  auto raw = io::read_array_i64(dir / "trial_bounds.bin",
                                bounds->dims[0] * bounds->dims[1]);
  for (std::size_t i = 0; i < bounds->dims[0]; ++i) {
    ds.trial_bounds.emplace_back(static_cast<std::size_t>(raw[2 * i]),
                                 static_cast<std::size_t>(raw[2 * i + 1]));
  }
  ds.validate();
  return ds;
}

std::string load_dataset_config_json(const std::filesystem::path& dir) {
  std::ifstream in(dir / "config.json");
  if (!in) throw std::runtime_error("dataset has no config.json");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace dcl

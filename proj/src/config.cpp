#include "geomsim/config.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

namespace geomsim {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) known = true;
    if (!known) throw ConfigError("unknown key: " + path + "/" + item.key());
  }
}

const json& require(const json& j, const char* key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError("missing key: " + path + "/" + key);
  return *it;
}

double num(const json& j, const char* key, const std::string& path) {
  const json& v = require(j, key, path);
  if (!v.is_number()) throw ConfigError(path + "/" + key + ": expected a number");
  return v.get<double>();
}

double num_or(const json& j, const char* key, double fallback, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_number()) throw ConfigError(path + "/" + key + ": expected a number");
  return it->get<double>();
}

std::vector<double> num_list(const json& j, const char* key, const std::string& path,
                             bool required = true) {
  auto it = j.find(key);
  if (it == j.end()) {
    if (required) throw ConfigError("missing key: " + path + "/" + key);
    return {};
  }
  if (!it->is_array()) throw ConfigError(path + "/" + key + ": expected an array");
  std::vector<double> out;
  for (const auto& v : *it) {
    if (!v.is_number()) throw ConfigError(path + "/" + key + ": expected numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

std::vector<std::string> str_list(const json& j, const char* key, const std::string& path) {
  const json& v = require(j, key, path);
  if (!v.is_array()) throw ConfigError(path + "/" + key + ": expected an array");
  std::vector<std::string> out;
  for (const auto& s : v) {
    if (!s.is_string()) throw ConfigError(path + "/" + key + ": expected strings");
    out.push_back(s.get<std::string>());
  }
  return out;
}

QubitParams parse_qubit(const json& j, const std::string& path) {
  check_keys(j,
             {"label", "omega01_sweet_mhz", "anharmonicity_mhz", "g01_mhz", "t1_us", "t_phi_us",
              "t2_star_us", "crosstalk_k"},
             path);
  QubitParams q;
  const json& label = require(j, "label", path);
  if (!label.is_string()) throw ConfigError(path + "/label: expected a string");
  q.label = label.get<std::string>();
  q.omega01_sweet_mhz = num(j, "omega01_sweet_mhz", path);
  q.anharmonicity_mhz = num(j, "anharmonicity_mhz", path);
  q.g01_mhz = num(j, "g01_mhz", path);
  q.t1_us = num(j, "t1_us", path);
  q.t_phi_us = num(j, "t_phi_us", path);
  q.t2_star_us = num_or(j, "t2_star_us", 0.0, path);
  q.crosstalk_k = num_or(j, "crosstalk_k", 0.6, path);
  return q;
}

OperatingTable parse_operating_point(const json& j, const std::string& path) {
  check_keys(j,
             {"active_labels", "detuning01_mhz", "detuning12_mhz", "drive_omega_sq_mhz2",
              "drive_delta_mhz", "duration_ns", "n_fock", "t1_us", "t_phi_us"},
             path);
  OperatingTable t;
  t.gate.active_labels = str_list(j, "active_labels", path);
  t.gate.detuning01_mhz = num_list(j, "detuning01_mhz", path);
  std::vector<double> d12 = num_list(j, "detuning12_mhz", path);
  if (d12.size() != t.gate.detuning01_mhz.size())
    throw ConfigError(path + ": detuning01_mhz / detuning12_mhz length mismatch");
  // the 1-2 detuning pins the gate-point anharmonicity: anh = d01 - d12
  t.gate.anharmonicity_override_mhz.resize(d12.size());
  for (std::size_t i = 0; i < d12.size(); ++i)
    t.gate.anharmonicity_override_mhz[i] = t.gate.detuning01_mhz[i] - d12[i];
  double omega_sq = num(j, "drive_omega_sq_mhz2", path);
  if (omega_sq <= 0) throw ConfigError(path + "/drive_omega_sq_mhz2: must be positive");
  t.gate.drive_omega_mhz = std::sqrt(omega_sq);
  t.gate.drive_delta_mhz = num_or(j, "drive_delta_mhz", 4.0, path);
  t.gate.duration_ns = num_or(j, "duration_ns", 0.0, path);
  t.gate.n_fock = static_cast<int>(num_or(j, "n_fock", 8.0, path));
  t.t1_us = num_list(j, "t1_us", path, false);
  t.t_phi_us = num_list(j, "t_phi_us", path, false);
  for (const auto* v : {&t.t1_us, &t.t_phi_us})
    if (!v->empty() && v->size() != t.gate.active_labels.size())
      throw ConfigError(path + ": coherence override length mismatch");
  return t;
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

DeviceFile load_device_file(const std::string& path) {
  std::string bytes = read_file(path);
  json j;
  try {
    j = json::parse(bytes);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": JSON parse error: " + e.what());
  }

  check_keys(j, {"device", "operating_points"}, path);
  const json& dj = require(j, "device", path);
  check_keys(dj, {"omega_rb_mhz", "resonator_t1_us", "qubits"}, path + "/device");

  DeviceFile file;
  file.path = path;
  file.content_hash = fnv1a_hex(bytes);
  file.device.omega_rb_mhz = num(dj, "omega_rb_mhz", path + "/device");
  file.device.resonator_t1_us = num(dj, "resonator_t1_us", path + "/device");
  const json& qs = require(dj, "qubits", path + "/device");
  if (!qs.is_array()) throw ConfigError(path + "/device/qubits: expected an array");
  for (std::size_t i = 0; i < qs.size(); ++i)
    file.device.qubits.push_back(
        parse_qubit(qs[i], path + "/device/qubits[" + std::to_string(i) + "]"));
  file.device.validate();

  auto op_it = j.find("operating_points");
  if (op_it != j.end()) {
    if (!op_it->is_object()) throw ConfigError(path + "/operating_points: expected an object");
    for (const auto& item : op_it->items()) {
      std::string p = path + "/operating_points/" + item.key();
      OperatingTable t = parse_operating_point(item.value(), p);
      t.gate.validate(file.device);
      file.operating_points.emplace(item.key(), std::move(t));
    }
  }
  return file;
}

const OperatingTable& operating_table(const DeviceFile& file, int n_qubits) {
  const OperatingTable* found = nullptr;
  for (const auto& [name, t] : file.operating_points) {
    if (static_cast<int>(t.gate.active_labels.size()) == n_qubits) {
      if (found)
        throw ConfigError(file.path + ": several operating points with " +
                          std::to_string(n_qubits) + " active qubits");
      found = &t;
    }
  }
  if (!found)
    throw ConfigError(file.path + ": no operating point with " + std::to_string(n_qubits) +
                      " active qubits");
  return *found;
}

DeviceSpec device_at_gate_point(const DeviceSpec& device, const OperatingTable& table) {
  DeviceSpec out = device;
  auto indices = table.gate.qubit_indices(device);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (!table.t1_us.empty()) out.qubits[indices[i]].t1_us = table.t1_us[i];
    if (!table.t_phi_us.empty()) out.qubits[indices[i]].t_phi_us = table.t_phi_us[i];
  }
  return out;
}

std::pair<double, double> AcceptanceBands::band(const std::string& key) const {
  auto it = bands.find(key);
  if (it == bands.end()) throw ConfigError("acceptance band not defined: " + key);
  return it->second;
}

double AcceptanceBands::scalar(const std::string& key) const {
  auto it = scalars.find(key);
  if (it == scalars.end()) throw ConfigError("acceptance scalar not defined: " + key);
  return it->second;
}

bool AcceptanceBands::within(const std::string& key, double value) const {
  auto [lo, hi] = band(key);
  return value >= lo && value <= hi;
}

AcceptanceBands load_acceptance_bands(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path + ": JSON parse error: " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path + ": expected an object");

  AcceptanceBands out;
  for (const auto& group : j.items()) {
    if (!group.value().is_object())
      throw ConfigError(path + "/" + group.key() + ": expected an object");
    for (const auto& entry : group.value().items()) {
      std::string key = group.key() + "." + entry.key();
      const json& v = entry.value();
      if (v.is_number()) {
        out.scalars[key] = v.get<double>();
      } else if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
        out.bands[key] = {v[0].get<double>(), v[1].get<double>()};
      } else {
        throw ConfigError(path + "/" + key + ": expected a number or a [lo, hi] pair");
      }
    }
  }
  return out;
}

}  // namespace geomsim

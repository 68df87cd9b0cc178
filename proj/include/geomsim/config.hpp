#pragma once

#include <map>
#include <string>
#include <vector>

#include "geomsim/protocols.hpp"

namespace geomsim {

class ConfigError : public ModelError {
 public:
  using ModelError::ModelError;
};

// One named gate operating point from a device file: the gate configuration
// (drive amplitude seeded from the file) plus the coherence times measured at
// the gate frequencies, which differ from the sweetpoint values.
struct OperatingTable {
  GateConfig gate;
  std::vector<double> t1_us;     // per active qubit; empty = keep device values
  std::vector<double> t_phi_us;  // per active qubit; empty = keep device values
};

struct DeviceFile {
  DeviceSpec device;
  std::map<std::string, OperatingTable> operating_points;
  std::string path;
  std::string content_hash;  // FNV-1a 64 over the raw bytes, hex
};

// Strict parse: unknown keys anywhere in the file fail with their key path.
DeviceFile load_device_file(const std::string& path);

// Operating point with the given number of active qubits; throws ConfigError
// if the file defines none or several.
const OperatingTable& operating_table(const DeviceFile& file, int n_qubits);

// Copy of the device with the table's gate-point T1/T_phi substituted on the
// active qubits.
DeviceSpec device_at_gate_point(const DeviceSpec& device, const OperatingTable& table);

// [lo, hi] bands keyed by dotted path ("gate2.fidelity") from acceptance.json.
struct AcceptanceBands {
  std::map<std::string, std::pair<double, double>> bands;
  std::map<std::string, double> scalars;

  std::pair<double, double> band(const std::string& key) const;
  double scalar(const std::string& key) const;
  bool within(const std::string& key, double value) const;
};

AcceptanceBands load_acceptance_bands(const std::string& path);

std::string fnv1a_hex(const std::string& bytes);
std::string read_file(const std::string& path);  // throws ConfigError if unreadable

}  // namespace geomsim

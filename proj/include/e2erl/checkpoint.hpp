#pragma once

// Text serialization of network weights. Numbers are written with 17
// significant digits so that loading reproduces every double bit-exactly.
// Documents end with an FNV-1a checksum line over all preceding bytes.

#include <filesystem>
#include <iosfwd>
#include <string>

#include "e2erl/neuralnet.hpp"

namespace e2erl {

void write_network(std::ostream& out, const NetworkWeights<double>& net);
NetworkWeights<double> read_network(std::istream& in);

/// Appends the checksum trailer to `body`.
std::string seal_document(const std::string& body);
/// Verifies the trailer and returns the body; IntegrityError on mismatch.
std::string unseal_document(const std::string& text);

std::string serialize_network(const NetworkWeights<double>& net);
NetworkWeights<double> deserialize_network(const std::string& text);

void save_network(const std::filesystem::path& path, const NetworkWeights<double>& net);
NetworkWeights<double> load_network(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace e2erl

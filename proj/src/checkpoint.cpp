#include "e2erl/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace e2erl {

std::string to_string(ActivationKind kind) {
  return kind == ActivationKind::Linear ? "linear" : "symmetric-sigmoid";
}

ActivationKind activation_kind_from_string(const std::string& name) {
  if (name == "linear") return ActivationKind::Linear;
  if (name == "symmetric-sigmoid") return ActivationKind::SymmetricSigmoid;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string to_string(RecurrentInit init) {
  switch (init) {
    case RecurrentInit::Identity: return "identity";
    case RecurrentInit::Zero: return "zero";
    case RecurrentInit::Random: return "random";
  }
  return "identity";
}

RecurrentInit recurrent_init_from_string(const std::string& name) {
  if (name == "identity") return RecurrentInit::Identity;
  if (name == "zero") return RecurrentInit::Zero;
  if (name == "random") return RecurrentInit::Random;
  throw ConfigError("unknown recurrent init '" + name + "'");
}

namespace {

void write_matrix(std::ostream& out, const Matrix<double>& m) {
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out << ' ';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

void expect(std::istream& in, const std::string& word) {
  std::string got;
  if (!(in >> got) || got != word)
    throw IntegrityError("checkpoint: expected '" + word + "', found '" + got + "'");
}

double read_number(std::istream& in) {
  std::string token;
  if (!(in >> token)) throw IntegrityError("checkpoint: truncated numeric data");
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end != token.c_str() + token.size()) throw IntegrityError("checkpoint: bad number '" + token + "'");
  return v;
}

Index read_index(std::istream& in) {
  long long v = 0;
  if (!(in >> v)) throw IntegrityError("checkpoint: expected an integer");
  return static_cast<Index>(v);
}

void read_matrix(std::istream& in, Matrix<double>& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = read_number(in);
}

ActivationSpec read_activation(std::istream& in) {
  std::string kind;
  in >> kind;
  ActivationSpec spec{activation_kind_from_string(kind), read_number(in)};
  return spec;
}

}  // namespace

void write_network(std::ostream& out, const NetworkWeights<double>& net) {
  out << "e2erl-network 1\nlayer_sizes";
  for (Index n : net.layer_sizes) out << ' ' << n;
  out << "\nhidden_activation " << to_string(net.hidden_activation.kind) << ' '
      << format_double(net.hidden_activation.output_scale) << "\noutput_activation "
      << to_string(net.output_activation.kind) << ' ' << format_double(net.output_activation.output_scale)
      << "\ntrainable_bias " << (net.trainable_bias ? 1 : 0) << "\nrecurrent " << (net.is_recurrent() ? 1 : 0)
      << '\n';
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    out << "weights " << l << ' ' << net.weights[l].rows() << ' ' << net.weights[l].cols() << '\n';
    write_matrix(out, net.weights[l]);
    out << "biases " << l << ' ' << net.biases[l].size() << '\n';
    write_matrix(out, net.biases[l].transpose());
  }
  if (net.recurrent) {
    out << "recurrent_matrix " << net.recurrent->rows() << ' ' << net.recurrent->cols() << '\n';
    write_matrix(out, *net.recurrent);
  }
  out << "end-network\n";
}

NetworkWeights<double> read_network(std::istream& in) {
  expect(in, "e2erl-network");
  expect(in, "1");
  expect(in, "layer_sizes");
  NetworkShape shape;
  std::string line;
  std::getline(in, line);
  std::istringstream sizes(line);
  for (long long n; sizes >> n;) shape.layer_sizes.push_back(static_cast<Index>(n));
  expect(in, "hidden_activation");
  shape.hidden_activation = read_activation(in);
  expect(in, "output_activation");
  shape.output_activation = read_activation(in);
  expect(in, "trainable_bias");
  shape.trainable_bias = read_index(in) != 0;
  expect(in, "recurrent");
  shape.recurrent = read_index(in) != 0;
  NetworkWeights<double> net;
  try {
    net = NetworkWeights<double>::zeros(shape);
  } catch (const ShapeError& e) {
    throw IntegrityError(std::string("checkpoint: ") + e.what());
  }
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    expect(in, "weights");
    if (read_index(in) != static_cast<Index>(l) || read_index(in) != net.weights[l].rows() ||
        read_index(in) != net.weights[l].cols())
      throw IntegrityError("checkpoint: weight block header disagrees with layer sizes");
    read_matrix(in, net.weights[l]);
    expect(in, "biases");
    if (read_index(in) != static_cast<Index>(l) || read_index(in) != net.biases[l].size())
      throw IntegrityError("checkpoint: bias block header disagrees with layer sizes");
    for (Index i = 0; i < net.biases[l].size(); ++i) net.biases[l][i] = read_number(in);
  }
  if (net.recurrent) {
    expect(in, "recurrent_matrix");
    if (read_index(in) != net.recurrent->rows() || read_index(in) != net.recurrent->cols())
      throw IntegrityError("checkpoint: recurrent block header disagrees with layer sizes");
    read_matrix(in, *net.recurrent);
  }
  expect(in, "end-network");
  net.validate();
  return net;
}

std::string seal_document(const std::string& body) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "checksum %016llx\n", static_cast<unsigned long long>(fnv1a64(body)));
  return body + buf;
}

std::string unseal_document(const std::string& text) {
  const auto pos = text.rfind("checksum ");
  if (pos == std::string::npos || (pos > 0 && text[pos - 1] != '\n'))
    throw IntegrityError("document has no checksum trailer");
  const std::string body = text.substr(0, pos);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "checksum %016llx\n", static_cast<unsigned long long>(fnv1a64(body)));
  if (text.substr(pos) != buf) throw IntegrityError("checksum mismatch: document is corrupt");
  return body;
}

std::string serialize_network(const NetworkWeights<double>& net) {
  std::ostringstream out;
  write_network(out, net);
  return seal_document(out.str());
}

NetworkWeights<double> deserialize_network(const std::string& text) {
  std::istringstream in(unseal_document(text));
  return read_network(in);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << content;
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void save_network(const std::filesystem::path& path, const NetworkWeights<double>& net) {
  write_file_atomic(path, serialize_network(net));
}

NetworkWeights<double> load_network(const std::filesystem::path& path) {
  return deserialize_network(read_file(path));
}

}  // namespace e2erl

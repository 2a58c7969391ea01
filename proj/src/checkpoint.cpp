#include "ggp/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ggp/error.hpp"

namespace ggp {

using nlohmann::json;

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<unsigned char>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const unsigned v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i < bytes.size()) {
    unsigned v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  std::array<int, 256> lut;
  lut.fill(-1);
  for (int i = 0; i < 64; ++i) lut[static_cast<unsigned char>(kAlphabet[i])] = i;
  if (text.size() % 4 != 0) throw InputError("checkpoint: malformed base64 payload");
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int q[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=') {
        q[k] = 0;
        ++pad;
      } else if ((q[k] = lut[static_cast<unsigned char>(c)]) < 0 || pad) {
        throw InputError("checkpoint: malformed base64 payload");
      }
    }
    const unsigned v = (q[0] << 18) | (q[1] << 12) | (q[2] << 6) | q[3];
    out.push_back(static_cast<unsigned char>(v >> 16));
    if (pad < 2) out.push_back(static_cast<unsigned char>(v >> 8));
    if (pad < 1) out.push_back(static_cast<unsigned char>(v));
  }
  return out;
}

json encode_matrix(const Eigen::MatrixXd& m) {
  std::vector<unsigned char> bytes(static_cast<std::size_t>(m.size()) * 8);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint64_t bits;
    const double v = m.data()[i];
    std::memcpy(&bits, &v, 8);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"f64le_colmajor", base64_encode(bytes)}};
}

Eigen::MatrixXd decode_matrix(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto bytes = base64_decode(j.at("f64le_colmajor").get<std::string>());
  if (rows < 0 || cols < 0 || bytes.size() != static_cast<std::size_t>(rows * cols) * 8)
    throw InputError("checkpoint: matrix payload does not match its shape");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    double v;
    std::memcpy(&v, &bits, 8);
    m.data()[i] = v;
  }
  return m;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream o;
  o << std::hex;
  o.width(16);
  o.fill('0');
  o << v;
  return o.str();
}

std::uint64_t parse_hex64(const std::string& s) {
  std::size_t used = 0;
  const auto v = std::stoull(s, &used, 16);
  if (used != s.size()) throw InputError("checkpoint: bad fingerprint '" + s + "'");
  return v;
}

// Scalars that must survive exactly go through their bit pattern.
json exact(double v) {
  Eigen::MatrixXd m(1, 1);
  m(0, 0) = v;
  return encode_matrix(m);
}
double exact_value(const json& j) { return decode_matrix(j)(0, 0); }

}  // namespace

bool operator==(const Checkpoint& a, const Checkpoint& b) {
  auto same_labels = [](const auto& x, const auto& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i].node != y[i].node || x[i].label != y[i].label) return false;
    return true;
  };
  return a.dataset_fingerprint == b.dataset_fingerprint &&
         a.graph_fingerprint == b.graph_fingerprint && a.spec == b.spec &&
         a.likelihood.n_classes == b.likelihood.n_classes &&
         a.likelihood.epsilon == b.likelihood.epsilon && a.config.to_map() == b.config.to_map() &&
         a.l2_normalize == b.l2_normalize && a.state == b.state && same_labels(a.labels, b.labels) &&
         a.final_elbo == b.final_elbo;
}

Checkpoint make_checkpoint(const TrainedModel& model, std::uint64_t dataset_fingerprint) {
  Checkpoint c;
  c.dataset_fingerprint = dataset_fingerprint;
  c.graph_fingerprint = model.prior.graph().fingerprint();
  c.spec = model.prior.spec();
  c.likelihood = model.likelihood;
  c.config = model.config;
  c.state = model.state;
  c.labels = model.labels;
  c.final_elbo = model.final_elbo;
  return c;
}

void write_checkpoint(std::ostream& out, const Checkpoint& c) {
  json j;
  j["format"] = "ggp-checkpoint";
  j["version"] = 1;
  j["dataset_fingerprint"] = hex64(c.dataset_fingerprint);
  j["graph_fingerprint"] = hex64(c.graph_fingerprint);
  j["kernel"] = {{"family", to_string(c.spec.family)},
                 {"degree", c.spec.degree},
                 {"variance", exact(c.spec.variance)},
                 {"offset", exact(c.spec.offset)}};
  j["likelihood"] = {{"type", "robust-max"},
                     {"n_classes", c.likelihood.n_classes},
                     {"epsilon", exact(c.likelihood.epsilon)}};
  j["config"] = c.config.to_map();
  j["features"] = {{"tfidf", c.config.tfidf}, {"l2_normalize", c.l2_normalize}};
  json scales = json::array();
  for (const auto& s : c.state.scale) scales.push_back(encode_matrix(s));
  j["state"] = {{"z", encode_matrix(c.state.z)}, {"mean", encode_matrix(c.state.mean)},
                {"scale", scales}};
  json labels = json::array();
  for (const auto& l : c.labels) labels.push_back({l.node, l.label});
  j["labels"] = labels;
  j["final_elbo"] = exact(c.final_elbo);
  out << j.dump(1) << '\n';
}

Checkpoint read_checkpoint(std::istream& in) {
  json j;
  try {
    in >> j;
    if (j.at("format") != "ggp-checkpoint") throw InputError("not a ggp checkpoint");
    if (j.at("version") != 1) throw InputError("unsupported checkpoint version");
    Checkpoint c;
    c.dataset_fingerprint = parse_hex64(j.at("dataset_fingerprint"));
    c.graph_fingerprint = parse_hex64(j.at("graph_fingerprint"));
    const auto& k = j.at("kernel");
    c.spec.family = kernel_family_from_string(k.at("family"));
    c.spec.degree = k.at("degree");
    c.spec.variance = exact_value(k.at("variance"));
    c.spec.offset = exact_value(k.at("offset"));
    c.spec.validate();
    c.likelihood.n_classes = j.at("likelihood").at("n_classes");
    c.likelihood.epsilon = exact_value(j.at("likelihood").at("epsilon"));
    c.likelihood.validate();
    for (const auto& [key, value] : j.at("config").items()) c.config.apply(key, value.get<std::string>());
    c.l2_normalize = j.at("features").at("l2_normalize");
    c.state.z = decode_matrix(j.at("state").at("z"));
    c.state.mean = decode_matrix(j.at("state").at("mean"));
    for (const auto& s : j.at("state").at("scale")) c.state.scale.push_back(decode_matrix(s));
    c.state.validate();
    for (const auto& l : j.at("labels")) c.labels.push_back({l.at(0).get<std::size_t>(), l.at(1).get<int>()});
    c.final_elbo = exact_value(j.at("final_elbo"));
    return c;
  } catch (const json::exception& e) {
    throw InputError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace ggp

#include "linematch/model.hpp"

#include <cstring>
#include <fstream>
#include <random>

#include "linematch/descriptor.hpp"
#include "linematch/errors.hpp"

namespace linematch {

namespace {

constexpr char kMagic[8] = {'L', 'M', 'C', 'K', 'P', 'T', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;

// Graph blocks start close to a pass-through so that early training refines
// descriptor matching instead of having to discover it.
constexpr double kResidualNoise = 0.05;
constexpr double kAffinityGain = 5.0;

Matrix selector(int rows, int cols) {
  Matrix m = Matrix::Zero(rows, cols);
  for (int i = 0; i < std::min(rows, cols); ++i) m(i, i) = 1.0;
  return m;
}

Matrix noise(int rows, int cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace

Model Model::init(const Config& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config = config;
  m.backbone = BackboneParams::init(config.backbone, seed);
  const int dim = config.descriptor_dim();
  m.dustbin = init_dustbin(dim, seed + 1);
  const int q = config.graph.width;
  std::mt19937_64 rng(seed + 2);
  int in = dim;
  for (int l = 1; l <= config.graph.layers; ++l) {
    GraphLayerParams p = GraphLayerParams::init(l, in, q, config.graph.attention_width, seed + 10 + l);
    const double s_in = kResidualNoise / std::sqrt(static_cast<double>(in));
    const double s_q = kResidualNoise / std::sqrt(static_cast<double>(q));
    p.theta1.value = noise(in, q, s_in, rng);
    p.theta2.value = selector(in, q) + noise(in, q, s_in, rng);
    p.w_cross.value.resize(2 * q, q);
    p.w_cross.value << noise(q, q, s_q, rng), selector(q, q) + noise(q, q, s_q, rng);
    m.layers.push_back(std::move(p));
    in = q;
  }
  m.affinity_weight = {"affinity.C", kAffinityGain * selector(q, q) + noise(q, q, kResidualNoise / q, rng)};
  return m;
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  for (auto& k : backbone.kernels) out.push_back(&k);
  for (auto& b : backbone.biases) out.push_back(&b);
  out.push_back(&dustbin);
  for (auto& l : layers)
    for (Parameter* p : {&l.omega, &l.a_vec, &l.theta1, &l.theta2, &l.w_cross}) out.push_back(p);
  out.push_back(&affinity_weight);
  return out;
}

std::vector<const Parameter*> Model::parameters() const {
  std::vector<const Parameter*> out;
  for (Parameter* p : const_cast<Model*>(this)->parameters()) out.push_back(p);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

namespace {

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_matrix(std::ostream& out, const Matrix& m) {
  put<std::int64_t>(out, m.rows());
  put<std::int64_t>(out, m.cols());
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

struct Reader {
  std::istream& in;
  template <class T>
  T get() {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw ParseError("checkpoint truncated", 0);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint64_t>();
    if (n > (1u << 26)) throw ParseError("checkpoint string too long", 0);
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw ParseError("checkpoint truncated", 0);
    return s;
  }
  Matrix get_matrix() {
    const auto r = get<std::int64_t>(), c = get<std::int64_t>();
    if (r < 0 || c < 0 || r * c > (1LL << 28)) throw ParseError("checkpoint tensor has a bad shape", 0);
    Matrix m(r, c);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw ParseError("checkpoint truncated", 0);
    return m;
  }
};

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof(kMagic));
    put(out, kVersion);
    put_string(out, config_to_json(ck.model.config).dump());
    put_string(out, ck.config_hash);
    put<std::int64_t>(out, ck.epoch);
    const auto params = ck.model.parameters();
    put<std::uint64_t>(out, params.size());
    for (const Parameter* p : params) {
      put_string(out, p->name);
      put_matrix(out, p->value);
    }
    put<std::int64_t>(out, ck.optimizer.step);
    put<std::uint64_t>(out, ck.optimizer.moments.size());
    for (const auto& [name, mv] : ck.optimizer.moments) {
      put_string(out, name);
      put_matrix(out, mv.first);
      put_matrix(out, mv.second);
    }
    if (!out) throw IoError("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  Reader r{in};
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw ParseError("not a checkpoint file", 0);
  if (r.get<std::uint32_t>() != kVersion) throw ParseError("unsupported checkpoint version", 0);
  const nlohmann::json cj = nlohmann::json::parse(r.get_string(), nullptr, false);
  if (cj.is_discarded()) throw ParseError("checkpoint config is not JSON", 0);
  Checkpoint ck;
  // Shapes come from the stored config; values are overwritten below.
  ck.model = Model::init(config_from_json(cj), 0);
  ck.config_hash = r.get_string();
  ck.epoch = static_cast<int>(r.get<std::int64_t>());
  const auto count = r.get<std::uint64_t>();
  auto params = ck.model.parameters();
  if (count != params.size()) throw ParseError("checkpoint parameter count does not match its config", 0);
  for (Parameter* p : params) {
    const std::string name = r.get_string();
    Matrix value = r.get_matrix();
    if (name != p->name || value.rows() != p->value.rows() || value.cols() != p->value.cols())
      throw ParseError("checkpoint tensor '" + name + "' does not match the model layout", 0);
    p->value = std::move(value);
  }
  ck.optimizer.step = r.get<std::int64_t>();
  const auto moments = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < moments; ++i) {
    std::string name = r.get_string();
    Matrix m1 = r.get_matrix();
    Matrix m2 = r.get_matrix();
    ck.optimizer.moments.emplace(std::move(name), std::make_pair(std::move(m1), std::move(m2)));
  }
  return ck;
}

}  // namespace linematch

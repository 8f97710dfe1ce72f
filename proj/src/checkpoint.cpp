#include "bdlab/checkpoint.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bdlab {

namespace {

template <typename T> constexpr char const *scalar_name()
{
  if constexpr (std::is_same_v<T, float>) {
    return "float";
  } else {
    return "double";
  }
}

template <typename T> std::string hex(T v)
{
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::hex);
  return std::string(buf.data(), res.ptr);
}

template <typename T> T parse_hex(std::string const &s)
{
  T    v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v, std::chars_format::hex);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::runtime_error("checkpoint: bad number '" + s + "'");
  }
  return v;
}

std::uint64_t parse_uint(std::string const &s)
{
  std::uint64_t v{};
  auto          res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::runtime_error("checkpoint: bad integer '" + s + "'");
  }
  return v;
}

std::string next_token(std::istream &is, char const *what)
{
  std::string tok;
  if (!(is >> tok)) { throw std::runtime_error(std::string("checkpoint: truncated at ") + what); }
  return tok;
}

void expect(std::istream &is, std::string const &word)
{
  auto const tok = next_token(is, word.c_str());
  if (tok != word) { throw std::runtime_error("checkpoint: expected '" + word + "', got '" + tok + "'"); }
}

} // namespace

template <typename Scalar> void write_checkpoint(std::ostream &os, Checkpoint<Scalar> const &c)
{
  auto const &net = c.model;
  auto const &cfg = c.config;
  os << "bdlab-checkpoint " << kCheckpointVersion << ' ' << scalar_name<Scalar>() << '\n';
  os << "widths";
  for (auto w : net.widths()) { os << ' ' << w; }
  os << '\n';
  os << "initial_step " << hex(cfg.initial_step) << '\n';
  os << "decay_factor " << hex(cfg.decay_factor) << '\n';
  os << "decay_every " << cfg.decay_every << '\n';
  os << "halt_tolerance " << hex(cfg.halt_tolerance) << '\n';
  os << "halt_window " << cfg.halt_window << '\n';
  os << "max_epochs " << cfg.max_epochs << '\n';
  os << "alpha " << hex(cfg.alpha) << '\n';
  os << "optimizer " << to_string(cfg.optimizer) << '\n';
  os << "batch_size " << cfg.batch_size << '\n';
  os << "adam_beta1 " << hex(cfg.adam_beta1) << '\n';
  os << "adam_beta2 " << hex(cfg.adam_beta2) << '\n';
  os << "adam_epsilon " << hex(cfg.adam_epsilon) << '\n';
  os << "seed " << cfg.seed << '\n';
  for (std::size_t l = 0; l < net.layers(); ++l) {
    auto const &W = net.weight(l);
    auto const &b = net.bias(l);
    os << "layer " << l << ' ' << W.rows() << ' ' << W.cols() << '\n';
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      for (Eigen::Index j = 0; j < W.cols(); ++j) { os << (j ? " " : "") << hex(W(i, j)); }
      os << '\n';
    }
    for (Eigen::Index i = 0; i < b.size(); ++i) { os << (i ? " " : "") << hex(b[i]); }
    os << '\n';
  }
  os << "end\n";
  if (!os) { throw std::runtime_error("checkpoint: write failed"); }
}

template <typename Scalar> Checkpoint<Scalar> read_checkpoint(std::istream &is)
{
  expect(is, "bdlab-checkpoint");
  auto const version = parse_uint(next_token(is, "version"));
  if (version != static_cast<std::uint64_t>(kCheckpointVersion)) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  auto const scalar = next_token(is, "scalar type");
  if (scalar != scalar_name<Scalar>()) {
    throw std::runtime_error("checkpoint: stored as " + scalar + ", requested " + scalar_name<Scalar>());
  }

  std::string line;
  std::getline(is, line);
  if (!std::getline(is, line)) { throw std::runtime_error("checkpoint: missing widths"); }
  std::istringstream        ws(line);
  std::vector<Eigen::Index> widths;
  std::string               tok;
  ws >> tok;
  if (tok != "widths") { throw std::runtime_error("checkpoint: expected widths line"); }
  while (ws >> tok) { widths.push_back(static_cast<Eigen::Index>(parse_uint(tok))); }

  Checkpoint<Scalar> c{Mlp<Scalar>(widths), {}};
  auto              &cfg = c.config;
  auto               key = [&](char const *k) {
    expect(is, k);
    return next_token(is, k);
  };
  cfg.initial_step   = parse_hex<double>(key("initial_step"));
  cfg.decay_factor   = parse_hex<double>(key("decay_factor"));
  cfg.decay_every    = parse_uint(key("decay_every"));
  cfg.halt_tolerance = parse_hex<double>(key("halt_tolerance"));
  cfg.halt_window    = parse_uint(key("halt_window"));
  cfg.max_epochs     = parse_uint(key("max_epochs"));
  cfg.alpha          = parse_hex<double>(key("alpha"));
  cfg.optimizer      = parse_optimizer(key("optimizer"));
  cfg.batch_size     = parse_uint(key("batch_size"));
  cfg.adam_beta1     = parse_hex<double>(key("adam_beta1"));
  cfg.adam_beta2     = parse_hex<double>(key("adam_beta2"));
  cfg.adam_epsilon   = parse_hex<double>(key("adam_epsilon"));
  cfg.seed           = parse_uint(key("seed"));

  auto &net = c.model;
  for (std::size_t l = 0; l < net.layers(); ++l) {
    expect(is, "layer");
    auto const idx  = parse_uint(next_token(is, "layer index"));
    auto const rows = static_cast<Eigen::Index>(parse_uint(next_token(is, "rows")));
    auto const cols = static_cast<Eigen::Index>(parse_uint(next_token(is, "cols")));
    if (idx != l || rows != net.weight(l).rows() || cols != net.weight(l).cols()) {
      throw std::runtime_error("checkpoint: layer " + std::to_string(l) + " shape does not match widths");
    }
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) { net.weight(l)(i, j) = parse_hex<Scalar>(next_token(is, "weights")); }
    }
    for (Eigen::Index i = 0; i < rows; ++i) { net.bias(l)[i] = parse_hex<Scalar>(next_token(is, "biases")); }
  }
  expect(is, "end");
  if (!net.all_finite()) { throw std::runtime_error("checkpoint: non-finite parameters"); }
  cfg.validate();
  return c;
}

template <typename Scalar> void save_checkpoint(std::string const &path, Checkpoint<Scalar> const &c)
{
  std::ofstream os(path);
  if (!os) { throw std::runtime_error("cannot open " + path + " for writing"); }
  write_checkpoint(os, c);
}

template <typename Scalar> Checkpoint<Scalar> load_checkpoint(std::string const &path)
{
  std::ifstream is(path);
  if (!is) { throw std::runtime_error("cannot open " + path); }
  return read_checkpoint<Scalar>(is);
}

std::string checkpoint_scalar(std::string const &path)
{
  std::ifstream is(path);
  if (!is) { throw std::runtime_error("cannot open " + path); }
  expect(is, "bdlab-checkpoint");
  next_token(is, "version");
  return next_token(is, "scalar type");
}

template void               write_checkpoint(std::ostream &, Checkpoint<float> const &);
template void               write_checkpoint(std::ostream &, Checkpoint<double> const &);
template Checkpoint<float>  read_checkpoint(std::istream &);
template Checkpoint<double> read_checkpoint(std::istream &);
template void               save_checkpoint(std::string const &, Checkpoint<float> const &);
template void               save_checkpoint(std::string const &, Checkpoint<double> const &);
template Checkpoint<float>  load_checkpoint(std::string const &);
template Checkpoint<double> load_checkpoint(std::string const &);

} // namespace bdlab

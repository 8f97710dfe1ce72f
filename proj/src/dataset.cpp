#include "bdlab/dataset.hpp"

#include "bdlab/parallel.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace bdlab {

namespace {

constexpr std::array<std::string_view, 5> kProvenanceNames{
  "clean-base", "attack-mislabeled", "attack-localizing", "clean-flood", "al-maximizer"};

constexpr std::size_t kShard = 1024;

constexpr std::string_view kHeader = "b,k,t,v,r,label,provenance";

double parse_double(std::string_view s)
{
  double v   = 0;
  auto   res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::runtime_error("csv: bad number '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view line)
{
  std::vector<std::string_view> out;
  std::size_t                   start = 0;
  for (;;) {
    auto const comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) { break; }
    start = comma + 1;
  }
  return out;
}

} // namespace

std::string_view to_string(Provenance p) { return kProvenanceNames[static_cast<std::size_t>(p)]; }

Provenance parse_provenance(std::string_view s)
{
  for (std::size_t i = 0; i < kProvenanceNames.size(); ++i) {
    if (kProvenanceNames[i] == s) { return static_cast<Provenance>(i); }
  }
  throw std::runtime_error("unknown provenance '" + std::string(s) + "'");
}

void Dataset::resize(Eigen::Index n, Provenance tag)
{
  Eigen::Index const old = size();
  points.conservativeResize(Eigen::NoChange, n);
  labels.conservativeResize(n);
  if (n > old) {
    points.rightCols(n - old).setZero();
    labels.tail(n - old).setZero();
  }
  provenance.resize(static_cast<std::size_t>(n), tag);
}

void Dataset::set(Eigen::Index i, NormalizedPoint const &x, double label, Provenance p)
{
  points.col(i)                           = x;
  labels[i]                               = label;
  provenance[static_cast<std::size_t>(i)] = p;
}

void Dataset::push_back(NormalizedPoint const &x, double label, Provenance p)
{
  Eigen::Index const n = size();
  points.conservativeResize(Eigen::NoChange, n + 1);
  labels.conservativeResize(n + 1);
  points.col(n) = x;
  labels[n]     = label;
  provenance.push_back(p);
}

void Dataset::append(Dataset const &other) { *this = concat(*this, other); }

Dataset Dataset::select(std::vector<Eigen::Index> const &rows) const
{
  Dataset out;
  out.points.resize(kFeatures, static_cast<Eigen::Index>(rows.size()));
  out.labels.resize(static_cast<Eigen::Index>(rows.size()));
  out.provenance.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto const r = rows[i];
    out.points.col(static_cast<Eigen::Index>(i)) = points.col(r);
    out.labels[static_cast<Eigen::Index>(i)]     = labels[r];
    out.provenance.push_back(provenance[static_cast<std::size_t>(r)]);
  }
  return out;
}

Dataset Dataset::without(std::vector<Eigen::Index> const &rows) const
{
  std::vector<bool> drop(static_cast<std::size_t>(size()), false);
  for (auto r : rows) { drop.at(static_cast<std::size_t>(r)) = true; }
  std::vector<Eigen::Index> keep;
  keep.reserve(drop.size());
  for (Eigen::Index i = 0; i < size(); ++i) {
    if (!drop[static_cast<std::size_t>(i)]) { keep.push_back(i); }
  }
  return select(keep);
}

std::size_t Dataset::count(Provenance p) const { return static_cast<std::size_t>(std::count(provenance.begin(), provenance.end(), p)); }

Dataset concat(Dataset const &a, Dataset const &b)
{
  Dataset out;
  out.points.resize(kFeatures, a.size() + b.size());
  out.labels.resize(a.size() + b.size());
  out.points << a.points, b.points;
  out.labels << a.labels, b.labels;
  out.provenance = a.provenance;
  out.provenance.insert(out.provenance.end(), b.provenance.begin(), b.provenance.end());
  return out;
}

Dataset generate_dataset(std::size_t n, std::uint64_t seed, Oracle const &oracle, Provenance tag, unsigned threads,
                         std::uint64_t *draws)
{
  Dataset out;
  out.points.resize(kFeatures, static_cast<Eigen::Index>(n));
  out.labels.resize(static_cast<Eigen::Index>(n));
  out.provenance.assign(n, tag);

  std::size_t const          shards = (n + kShard - 1) / kShard;
  std::vector<std::uint64_t> shard_draws(shards, 0);
  parallel_for(shards, threads, [&](std::size_t s) {
    Rng rng(derive_seed(seed, s));
    for (std::size_t i = s * kShard; i < std::min(n, (s + 1) * kShard); ++i) {
      auto const x = sample_valid(rng, oracle.bounds(), &shard_draws[s]);
      out.points.col(static_cast<Eigen::Index>(i)) = x;
      out.labels[static_cast<Eigen::Index>(i)]     = oracle(x);
    }
  });
  if (draws) {
    for (auto d : shard_draws) { *draws += d; }
  }
  return out;
}

std::string format_double(double v)
{
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

void write_csv(std::ostream &os, Dataset const &d)
{
  os << kHeader << '\n';
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    for (Eigen::Index f = 0; f < kFeatures; ++f) { os << format_double(d.points(f, i)) << ','; }
    os << format_double(d.labels[i]) << ',' << to_string(d.provenance[static_cast<std::size_t>(i)]) << '\n';
  }
}

Dataset read_csv(std::istream &is)
{
  std::string line;
  if (!std::getline(is, line) || line != kHeader) { throw std::runtime_error("csv: expected header '" + std::string(kHeader) + "'"); }
  std::vector<NormalizedPoint> pts;
  std::vector<double>          labels;
  Dataset                      out;
  while (std::getline(is, line)) {
    if (line.empty()) { continue; }
    auto const fields = split(line);
    if (fields.size() != 7) { throw std::runtime_error("csv: expected 7 fields, got " + std::to_string(fields.size())); }
    NormalizedPoint x;
    for (Eigen::Index f = 0; f < kFeatures; ++f) { x[f] = parse_double(fields[static_cast<std::size_t>(f)]); }
    pts.push_back(x);
    labels.push_back(parse_double(fields[5]));
    out.provenance.push_back(parse_provenance(fields[6]));
  }
  out.points.resize(kFeatures, static_cast<Eigen::Index>(pts.size()));
  out.labels.resize(static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    out.points.col(static_cast<Eigen::Index>(i)) = pts[i];
    out.labels[static_cast<Eigen::Index>(i)]     = labels[i];
  }
  return out;
}

void save_csv(std::string const &path, Dataset const &d)
{
  std::ofstream os(path, std::ios::binary);
  if (!os) { throw std::runtime_error("cannot write " + path); }
  write_csv(os, d);
}

Dataset load_csv(std::string const &path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is) { throw std::runtime_error("cannot read " + path); }
  return read_csv(is);
}

} // namespace bdlab

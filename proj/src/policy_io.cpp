#include "csdro/policies.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace csdro {

void save_policy(const DecisionRule& rule, std::ostream& out) {
  out << "csdro-policy 1\n";
  out << "kind " << to_string(rule.kind()) << "\n";
  out << "d_x " << rule.input_dim() << "\n";
  out << "d_z " << rule.output_dim() << "\n";
  if (const auto* f = dynamic_cast<const SoftRegressionForest*>(&rule)) {
    out << "tau " << format_double(f->tau()) << "\n";
    out << "trees " << f->trees() << "\n";
    out << "depths";
    for (int D : f->depths()) out << ' ' << D;
    out << "\n";
  } else if (const auto* n = dynamic_cast<const TwoLayerNet*>(&rule)) {
    out << "hidden " << n->hidden() << "\n";
  }
  out << "theta " << rule.param_count() << "\n";
  for (Eigen::Index i = 0; i < rule.params().size(); ++i) out << format_double(rule.params()(i)) << "\n";
}

void save_policy(const DecisionRule& rule, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw RuntimeFailure("save_policy: cannot write '" + tmp + "'");
    save_policy(rule, out);
    if (!out) throw RuntimeFailure("save_policy: write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw RuntimeFailure("save_policy: cannot rename to '" + path + "'");
}

namespace {

std::istringstream expect_line(std::istream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("load_policy: missing '" + key + "' line");
  std::istringstream ss(line);
  std::string k;
  ss >> k;
  if (k != key) throw ValidationError("load_policy: expected '" + key + "', found '" + k + "'");
  return ss;
}

template <class T>
T read_value(std::istream& in, const std::string& key) {
  auto ss = expect_line(in, key);
  T v{};
  if (!(ss >> v)) throw ValidationError("load_policy: bad value for '" + key + "'");
  return v;
}

}  // namespace

std::unique_ptr<DecisionRule> load_policy(std::istream& in) {
  std::string magic;
  if (!std::getline(in, magic) || magic != "csdro-policy 1") throw ValidationError("load_policy: not a policy file");
  const auto kind = parse_policy_kind(read_value<std::string>(in, "kind"));
  const int d_x = read_value<int>(in, "d_x");
  const int d_z = read_value<int>(in, "d_z");

  std::unique_ptr<DecisionRule> rule;
  if (kind == PolicyKind::srf) {
    const std::string tau_s = read_value<std::string>(in, "tau");
    double tau = 0.0;
    std::from_chars(tau_s.data(), tau_s.data() + tau_s.size(), tau);
    const int trees = read_value<int>(in, "trees");
    auto ss = expect_line(in, "depths");
    std::vector<int> depths;
    int D;
    while (ss >> D) depths.push_back(D);
    if (static_cast<int>(depths.size()) != trees) throw ValidationError("load_policy: depth count differs from trees");
    rule = std::make_unique<SoftRegressionForest>(d_x, d_z, depths, tau);
  } else {
    rule = std::make_unique<TwoLayerNet>(d_x, d_z, read_value<int>(in, "hidden"));
  }
  const auto n = read_value<std::size_t>(in, "theta");
  if (n != rule->param_count()) throw ValidationError("load_policy: theta length does not match header");
  Vec theta(static_cast<Eigen::Index>(n));
  std::string line;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw ValidationError("load_policy: truncated theta");
    double v = 0.0;
    auto [p, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
    if (ec != std::errc() || p != line.data() + line.size())
      throw ValidationError("load_policy: bad theta entry at index " + std::to_string(i));
    theta(static_cast<Eigen::Index>(i)) = v;
  }
  rule->set_params(theta);
  return rule;
}

std::unique_ptr<DecisionRule> load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("load_policy: cannot open '" + path + "'");
  return load_policy(in);
}

}  // namespace csdro

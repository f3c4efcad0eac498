#include "prada/eval/projection.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "prada/eval/probe.hpp"
#include "prada/util/error.hpp"
#include "svg.hpp"

namespace prada::eval {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using svg::escape;
using svg::num;
using svg::px;

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

}  // namespace

Projection principal_projection(const ad::Tensor& x, const std::vector<std::string>& domains, const std::string& arm) {
  if (x.ndim() != 2 || x.rows() != domains.size()) throw ContractError("projection: one domain label per row");
  const std::size_t n = x.rows(), d = x.cols();
  if (n < 2 || d < 2) throw DataError("projection: need at least 2 samples of dimension >= 2");
  Eigen::Map<const RowMat> data(x.raw(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const Eigen::RowVectorXd mean = data.colwise().mean();
  const RowMat centered = data.rowwise() - mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw DataError("projection: eigendecomposition failed");

  Projection p;
  p.mean.assign(mean.data(), mean.data() + d);
  for (int a = 0; a < 2; ++a) {
    // Eigenvalues come in increasing order.
    const Eigen::Index col = static_cast<Eigen::Index>(d) - 1 - a;
    Eigen::VectorXd v = eig.eigenvectors().col(col);
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      if (std::abs(v(k)) > 1e-12) {
        if (v(k) < 0) v = -v;
        break;
      }
    }
    p.axes[static_cast<std::size_t>(a)].assign(v.data(), v.data() + d);
    p.variance[static_cast<std::size_t>(a)] = std::max(0.0, eig.eigenvalues()(col));
  }
  Eigen::Map<const Eigen::VectorXd> a0(p.axes[0].data(), static_cast<Eigen::Index>(d));
  Eigen::Map<const Eigen::VectorXd> a1(p.axes[1].data(), static_cast<Eigen::Index>(d));
  const Eigen::VectorXd c0 = centered * a0, c1 = centered * a1;
  p.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    p.points.push_back({c0(static_cast<Eigen::Index>(i)), c1(static_cast<Eigen::Index>(i)), domains[i], arm});
  }
  return p;
}

double reconstruction_error(const ad::Tensor& x, const Projection& p) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t k = 0; k < x.cols(); ++k) {
      const double back = p.mean[k] + p.points[i].x * p.axes[0][k] + p.points[i].y * p.axes[1][k];
      worst = std::max(worst, std::abs(back - x.at(i, k)));
    }
  }
  return worst;
}

Projection project_embeddings(const model::StudentModel& model, const std::vector<LabeledQuestion>& samples,
                              const std::string& arm) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : samples) ++counts[s.domain];
  if (counts.size() < 2) throw DataError("projection: samples from at least 2 domains are required");
  for (const auto& [domain, n] : counts) {
    if (n < 10) throw DataError("projection: domain '" + domain + "' has only " + std::to_string(n) + " samples");
  }
  std::vector<std::string> qs, domains;
  for (const auto& s : samples) {
    qs.push_back(s.q);
    domains.push_back(s.domain);
  }
  return principal_projection(pooled_features(model, qs), domains, arm);
}

std::string projection_csv(const std::vector<ProjectionPoint>& points) {
  std::string out = "x,y,domain,arm\n";
  for (const auto& p : points) {
    out += num(p.x) + "," + num(p.y) + "," + csv_field(p.domain) + "," + csv_field(p.arm) + "\n";
  }
  return out;
}

std::string projection_svg(const std::vector<ProjectionPoint>& points, const std::string& title) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::vector<std::string> arms, domains;
  for (const auto& p : points) {
    if (std::find(arms.begin(), arms.end(), p.arm) == arms.end()) arms.push_back(p.arm);
    if (std::find(domains.begin(), domains.end(), p.domain) == domains.end()) domains.push_back(p.domain);
  }
  const double panel = 360, pad = 30, top = 50;
  const double width = std::max<double>(1, arms.size()) * (panel + pad) + pad;
  const double height = top + panel + 60;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(width) << "\" height=\"" << px(height)
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << px(width / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
     << "</text>\n";
  for (std::size_t a = 0; a < arms.size(); ++a) {
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& p : points) {
      if (p.arm != arms[a]) continue;
      xmin = std::min(xmin, p.x), xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y), ymax = std::max(ymax, p.y);
    }
    const double sx = xmax > xmin ? (panel - 20) / (xmax - xmin) : 1.0;
    const double sy = ymax > ymin ? (panel - 20) / (ymax - ymin) : 1.0;
    const double ox = pad + static_cast<double>(a) * (panel + pad);
    os << "<rect x=\"" << px(ox) << "\" y=\"" << px(top) << "\" width=\"" << px(panel) << "\" height=\"" << px(panel)
       << "\" fill=\"none\" stroke=\"#888\"/>\n";
    os << "<text x=\"" << px(ox + panel / 2) << "\" y=\"" << px(top - 6) << "\" text-anchor=\"middle\">"
       << escape(arms[a]) << "</text>\n";
    for (const auto& p : points) {
      if (p.arm != arms[a]) continue;
      const std::size_t ci = static_cast<std::size_t>(std::find(domains.begin(), domains.end(), p.domain) -
                                                      domains.begin());
      const double cx = ox + 10 + (p.x - xmin) * sx;
      const double cy = top + panel - 10 - (p.y - ymin) * sy;
      os << "<circle cx=\"" << px(cx) << "\" cy=\"" << px(cy) << "\" r=\"2.5\" fill=\"" << kColors[ci % 5]
         << "\" fill-opacity=\"0.7\"/>\n";
    }
  }
  for (std::size_t i = 0; i < domains.size(); ++i) {
    const double lx = pad + static_cast<double>(i) * 120, ly = top + panel + 30;
    os << "<circle cx=\"" << px(lx) << "\" cy=\"" << px(ly - 4) << "\" r=\"4\" fill=\"" << kColors[i % 5] << "\"/>\n";
    os << "<text x=\"" << px(lx + 8) << "\" y=\"" << px(ly) << "\">" << escape(domains[i]) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace prada::eval

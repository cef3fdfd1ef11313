#include "dlab/projection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "dlab/io.hpp"

namespace dlab {

namespace {

void sign_fix(std::span<double> v) {
  for (double x : v) {
    if (std::abs(x) > 1e-12) {
      if (x < 0.0) {
        for (double& y : v) {
          y = -y;
        }
      }
      return;
    }
  }
}

}  // namespace

SymmetricEigen3 eigen_sym3(const std::array<double, 9>& m) {
  double a[3][3] = {{m[0], m[1], m[2]}, {m[3], m[4], m[5]}, {m[6], m[7], m[8]}};
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      if (std::abs(a[i][j] - a[j][i]) >
          1e-12 * std::max(1.0, std::abs(a[i][j]))) {
        throw DomainError("eigen_sym3: matrix is not symmetric");
      }
    }
  }
  double v[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const double scale =
      std::abs(a[0][0]) + std::abs(a[1][1]) + std::abs(a[2][2]) +
      2.0 * (std::abs(a[0][1]) + std::abs(a[0][2]) + std::abs(a[1][2]));
  for (int sweep = 0; sweep < 64; ++sweep) {
    const double off =
        std::abs(a[0][1]) + std::abs(a[0][2]) + std::abs(a[1][2]);
    if (off <= 1e-15 * std::max(scale, 1e-300)) {
      break;
    }
    for (int p = 0; p < 3; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (a[p][q] == 0.0) {
          continue;
        }
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double app = a[p][p];
        const double aqq = a[q][q];
        const double apq = a[p][q];
        a[p][p] = c * c * app - 2.0 * s * c * apq + s * s * aqq;
        a[q][q] = s * s * app + 2.0 * s * c * apq + c * c * aqq;
        a[p][q] = 0.0;
        a[q][p] = 0.0;
        const int r = 3 - p - q;
        const double arp = a[r][p];
        const double arq = a[r][q];
        a[r][p] = c * arp - s * arq;
        a[p][r] = a[r][p];
        a[r][q] = s * arp + c * arq;
        a[q][r] = a[r][q];
        for (int i = 0; i < 3; ++i) {
          const double vip = v[i][p];
          const double viq = v[i][q];
          v[i][p] = c * vip - s * viq;
          v[i][q] = s * vip + c * viq;
        }
      }
    }
  }
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    if (a[x][x] != a[y][y]) {
      return a[x][x] > a[y][y];
    }
    return x < y;
  });
  SymmetricEigen3 out;
  for (int i = 0; i < 3; ++i) {
    out.values[static_cast<std::size_t>(i)] = a[order[static_cast<std::size_t>(i)]][order[static_cast<std::size_t>(i)]];
    for (int r = 0; r < 3; ++r) {
      out.vectors[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)] =
          v[r][order[static_cast<std::size_t>(i)]];
    }
    sign_fix(out.vectors[static_cast<std::size_t>(i)]);
  }
  return out;
}

ProjectionBasis qr_basis(const DenseLayer& final_layer,
                         const std::array<int, 3>& classes) {
  if (classes[0] == classes[1] || classes[0] == classes[2] ||
      classes[1] == classes[2]) {
    throw DomainError("qr_basis: the three classes must be distinct");
  }
  for (int c : classes) {
    if (c < 0 || static_cast<std::size_t>(c) >= final_layer.out_dim()) {
      throw DomainError("qr_basis: class " + std::to_string(c) +
                        " out of range");
    }
  }
  const std::size_t h = final_layer.in_dim();
  ProjectionBasis out;
  out.class_triple = classes;
  out.basis = Matrix(h + 1, 3);
  for (int j = 0; j < 3; ++j) {
    const auto cls = static_cast<std::size_t>(classes[static_cast<std::size_t>(j)]);
    std::vector<double> t(h + 1);
    const auto row = final_layer.weights.row(cls);
    std::copy(row.begin(), row.end(), t.begin());
    t[h] = final_layer.bias[cls];
    const double original_norm = std::sqrt(dot(t, t));
    // Classical Gram-Schmidt with a second pass; two passes are enough to
    // restore orthogonality at these sizes.
    for (int pass = 0; pass < 2; ++pass) {
      for (int i = 0; i < j; ++i) {
        double proj = 0.0;
        for (std::size_t r = 0; r < h + 1; ++r) {
          proj += out.basis(r, static_cast<std::size_t>(i)) * t[r];
        }
        for (std::size_t r = 0; r < h + 1; ++r) {
          t[r] -= proj * out.basis(r, static_cast<std::size_t>(i));
        }
      }
    }
    const double norm = std::sqrt(dot(t, t));
    if (norm <= 1e-10 * std::max(original_norm, 1e-300) ||
        original_norm == 0.0) {
      throw GeometryError(
          "qr_basis: class templates are linearly dependent; class " +
          std::to_string(classes[static_cast<std::size_t>(j)]) +
          " adds no new direction");
    }
    for (std::size_t r = 0; r < h + 1; ++r) {
      t[r] /= norm;
    }
    sign_fix(t);
    for (std::size_t r = 0; r < h + 1; ++r) {
      out.basis(r, static_cast<std::size_t>(j)) = t[r];
    }
  }
  return out;
}

Matrix project(const FeatureMatrix& features, const ProjectionBasis& basis) {
  const std::size_t hp = basis.basis.rows();
  const std::size_t w = features.rows.cols();
  const bool augment = (w + 1 == hp);
  if (!augment && w != hp) {
    throw ShapeError("project: feature width " + std::to_string(w) +
                     " matches neither the basis rows (" + std::to_string(hp) +
                     ") nor one less");
  }
  Matrix out(features.rows.rows(), 3);
  for (std::size_t i = 0; i < features.rows.rows(); ++i) {
    const auto x = features.rows.row(i);
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < w; ++r) {
        s += basis.basis(r, j) * x[r];
      }
      if (augment) {
        s += basis.basis(hp - 1, j);
      }
      out(i, j) = s;
    }
  }
  return out;
}

Projected2D pca_2d(const Matrix& points3, std::vector<int> labels) {
  if (points3.cols() != 3) {
    throw ShapeError("pca_2d: points must be N x 3");
  }
  const std::size_t n = points3.rows();
  if (n < 2) {
    throw DomainError("pca_2d: need at least two points");
  }
  if (!labels.empty() && labels.size() != n) {
    throw ShapeError("pca_2d: labels do not match points");
  }
  double mean[3] = {0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      mean[j] += points3(i, j);
    }
  }
  for (double& m : mean) {
    m /= static_cast<double>(n);
  }
  double max_dev = 0.0;
  double max_abs = 0.0;
  std::array<double, 9> cov{};
  for (std::size_t i = 0; i < n; ++i) {
    double d[3];
    for (std::size_t j = 0; j < 3; ++j) {
      d[j] = points3(i, j) - mean[j];
      max_dev = std::max(max_dev, std::abs(d[j]));
      max_abs = std::max(max_abs, std::abs(points3(i, j)));
    }
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t c = 0; c < 3; ++c) {
        cov[r * 3 + c] += d[r] * d[c];
      }
    }
  }
  if (max_dev <= 1e-14 * std::max(max_abs, 1.0)) {
    throw GeometryError("pca_2d: all points coincide, covariance is zero");
  }
  for (double& c : cov) {
    c /= static_cast<double>(n - 1);
  }
  const SymmetricEigen3 eig = eigen_sym3(cov);
  Projected2D out;
  out.labels = std::move(labels);
  out.explained_variance = {std::max(eig.values[0], 0.0),
                            std::max(eig.values[1], 0.0)};
  out.points = Matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < 3; ++r) {
        s += (points3(i, r) - mean[r]) * eig.vectors[j][r];
      }
      out.points(i, j) = s;
    }
  }
  return out;
}

namespace {

const char* kPalette[] = {"#d62728", "#2ca02c", "#1f77b4", "#ff7f0e",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
constexpr std::size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

void emit_scatter(const Projected2D& proj,
                  const std::vector<std::string>& class_names,
                  const std::filesystem::path& svg_path) {
  const std::size_t n = proj.points.rows();
  if (n == 0) {
    throw DomainError("emit_scatter: nothing to plot");
  }
  if (proj.labels.size() != n) {
    throw ShapeError("emit_scatter: labels do not match points");
  }
  double xmin = proj.points(0, 0), xmax = xmin;
  double ymin = proj.points(0, 1), ymax = ymin;
  for (std::size_t i = 0; i < n; ++i) {
    xmin = std::min(xmin, proj.points(i, 0));
    xmax = std::max(xmax, proj.points(i, 0));
    ymin = std::min(ymin, proj.points(i, 1));
    ymax = std::max(ymax, proj.points(i, 1));
  }
  auto widen = [](double& lo, double& hi) {
    const double span = hi - lo;
    if (span <= 0.0) {
      lo -= 0.5;
      hi += 0.5;
    } else {
      lo -= 0.05 * span;
      hi += 0.05 * span;
    }
  };
  widen(xmin, xmax);
  widen(ymin, ymax);

  const double plot_w = 520.0, plot_h = 440.0;
  const double left = 40.0, top = 20.0;
  const double width = 760.0, height = 500.0;
  auto sx = [&](double x) {
    return left + (x - xmin) / (xmax - xmin) * plot_w;
  };
  auto sy = [&](double y) {
    return top + plot_h - (y - ymin) / (ymax - ymin) * plot_h;
  };

  std::vector<int> present;
  for (int label : proj.labels) {
    if (std::find(present.begin(), present.end(), label) == present.end()) {
      present.push_back(label);
    }
  }
  std::sort(present.begin(), present.end());

  auto name_of = [&](int label) {
    if (label >= 0 && static_cast<std::size_t>(label) < class_names.size()) {
      return class_names[static_cast<std::size_t>(label)];
    }
    return "class_" + std::to_string(label);
  };
  auto color_of = [&](int label) {
    std::size_t rank = 0;
    for (std::size_t i = 0; i < present.size(); ++i) {
      if (present[i] == label) {
        rank = i;
        break;
      }
    }
    return kPalette[rank % kPaletteSize];
  };

  std::ofstream svg = io::open_output(svg_path, /*binary=*/false);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
      << height << "\">\n";
  svg << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
      << "\" fill=\"#ffffff\"/>\n";
  svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w
      << "\" height=\"" << plot_h
      << "\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
  for (std::size_t i = 0; i < n; ++i) {
    svg << "<circle cx=\"" << fixed3(sx(proj.points(i, 0))) << "\" cy=\""
        << fixed3(sy(proj.points(i, 1))) << "\" r=\"3\" fill=\""
        << color_of(proj.labels[i]) << "\" fill-opacity=\"0.75\"/>\n";
  }
  double ly = top + 10.0;
  const double lx = left + plot_w + 20.0;
  for (int label : present) {
    svg << "<rect x=\"" << lx << "\" y=\"" << fixed3(ly - 9.0)
        << "\" width=\"12\" height=\"12\" fill=\"" << color_of(label)
        << "\"/>\n";
    svg << "<text x=\"" << fixed3(lx + 18.0) << "\" y=\"" << fixed3(ly + 1.0)
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << name_of(label)
        << "</text>\n";
    ly += 20.0;
  }
  svg << "<text x=\"" << left << "\" y=\"" << fixed3(top + plot_h + 24.0)
      << "\" font-family=\"sans-serif\" font-size=\"11\">explained variance: "
      << io::format_double(proj.explained_variance[0]) << ", "
      << io::format_double(proj.explained_variance[1]) << "</text>\n";
  svg << "</svg>\n";
  if (!svg) {
    throw IoError("emit_scatter: write failed for " + svg_path.string());
  }

  std::filesystem::path csv_path = svg_path;
  csv_path.replace_extension(".csv");
  std::ofstream csv = io::open_output(csv_path, /*binary=*/false);
  csv << "x,y,label,class_name\n";
  for (std::size_t i = 0; i < n; ++i) {
    csv << io::format_double(proj.points(i, 0)) << ','
        << io::format_double(proj.points(i, 1)) << ',' << proj.labels[i] << ','
        << name_of(proj.labels[i]) << '\n';
  }
  if (!csv) {
    throw IoError("emit_scatter: write failed for " + csv_path.string());
  }
}

}  // namespace dlab

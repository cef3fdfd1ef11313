#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "dlab/geometry.hpp"
#include "dlab/matrix.hpp"
#include "dlab/nn.hpp"

namespace dlab {

/// Orthonormal basis of the span of three class templates (final-layer rows
/// with the bias appended), columns sign-fixed so the first entry of
/// noticeable magnitude is positive.
struct ProjectionBasis {
  Matrix basis;  // (h + 1) x 3, orthonormal columns
  std::array<int, 3> class_triple{0, 1, 2};
};

struct Projected2D {
  Matrix points;  // N x 2
  std::vector<int> labels;
  std::array<double, 2> explained_variance{0.0, 0.0};
};

/// Eigendecomposition of a symmetric 3x3 matrix (row-major, all nine
/// entries) by cyclic Jacobi rotations. Eigenvalues sorted descending;
/// vectors[i] pairs with values[i] and is sign-fixed like the basis columns.
struct SymmetricEigen3 {
  std::array<double, 3> values{};
  std::array<std::array<double, 3>, 3> vectors{};
};
SymmetricEigen3 eigen_sym3(const std::array<double, 9>& m);

/// Gram-Schmidt with one reorthogonalization pass over the three
/// bias-augmented templates. Throws GeometryError when they are not
/// linearly independent.
ProjectionBasis qr_basis(const DenseLayer& final_layer,
                         const std::array<int, 3>& classes);

/// Coordinates of each feature row in the template span. Rows of width
/// basis-rows are used as-is; rows one entry narrower get a trailing 1
/// appended first (the bias convention used by qr_basis).
Matrix project(const FeatureMatrix& features, const ProjectionBasis& basis);

/// PCA of 3-D points onto the top-2 principal components of their sample
/// covariance. Optional labels are carried through to the result.
Projected2D pca_2d(const Matrix& points3, std::vector<int> labels = {});

/// Self-contained SVG scatter plot (one circle per point, one color per
/// class, legend with swatches) plus a companion CSV next to it with columns
/// x,y,label,class_name. Deterministic bytes for identical input.
void emit_scatter(const Projected2D& proj,
                  const std::vector<std::string>& class_names,
                  const std::filesystem::path& svg_path);

}  // namespace dlab

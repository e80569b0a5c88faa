#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

namespace shapecm::ad {

/// Flat store of trainable parameters with a named segment table. Segments
/// tile the flat array exactly (append-only construction; load() revalidates).
/// Matrix segments are stored row-major.
///
/// Text serialization ("paramvec v1"):
///   paramvec v1
///   segments <N>
///   <name> <rows> <cols>   (N lines)
///   values <total>
///   <value>                (total lines, %.17g)
///   end
class ParamVector {
 public:
  struct Segment {
    std::string name;
    Eigen::Index offset = 0;
    Eigen::Index rows = 0;
    Eigen::Index cols = 1;
    Eigen::Index size() const { return rows * cols; }
  };

  /// Appends a zero-initialized segment; returns its index.
  int add(const std::string& name, Eigen::Index rows, Eigen::Index cols = 1);

  Eigen::Map<Eigen::ArrayXd> segment(const std::string& name);
  Eigen::Map<const Eigen::ArrayXd> segment(const std::string& name) const;
  const Segment& segment_info(const std::string& name) const;
  bool has_segment(const std::string& name) const;

  Eigen::ArrayXd& values() { return values_; }
  const Eigen::ArrayXd& values() const { return values_; }
  const std::vector<Segment>& segments() const { return segments_; }
  Eigen::Index size() const { return values_.size(); }
  bool empty() const { return values_.size() == 0; }

  void set_zero() { values_.setZero(); }
  /// Same segment table (names, shapes, order).
  bool same_layout(const ParamVector& other) const;
  /// Zero-valued copy of this layout (for gradients and Adam moments).
  ParamVector zeros_like() const;

  void save(std::ostream& os) const;
  void save_file(const std::string& path) const;
  static ParamVector load(std::istream& is);
  static ParamVector load_file(const std::string& path);

 private:
  int find(const std::string& name) const;

  Eigen::ArrayXd values_{0};
  std::vector<Segment> segments_;
};

}  // namespace shapecm::ad

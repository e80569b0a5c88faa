#include "shapecm/autodiff/param_vector.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace shapecm::ad {

int ParamVector::add(const std::string& name, Eigen::Index rows,
                     Eigen::Index cols) {
  if (name.empty() || name.find_first_of(" \t\n") != std::string::npos)
    throw std::invalid_argument("paramvec: bad segment name '" + name + "'");
  if (find(name) >= 0)
    throw std::invalid_argument("paramvec: duplicate segment '" + name + "'");
  if (rows <= 0 || cols <= 0)
    throw std::invalid_argument("paramvec: non-positive shape for '" + name +
                                "'");
  Segment s{name, values_.size(), rows, cols};
  values_.conservativeResize(values_.size() + s.size());
  values_.tail(s.size()).setZero();
  segments_.push_back(s);
  return static_cast<int>(segments_.size()) - 1;
}

int ParamVector::find(const std::string& name) const {
  for (std::size_t i = 0; i < segments_.size(); ++i)
    if (segments_[i].name == name) return static_cast<int>(i);
  return -1;
}

bool ParamVector::has_segment(const std::string& name) const {
  return find(name) >= 0;
}

const ParamVector::Segment& ParamVector::segment_info(
    const std::string& name) const {
  const int i = find(name);
  if (i < 0)
    throw std::invalid_argument("paramvec: no segment '" + name + "'");
  return segments_[i];
}

Eigen::Map<Eigen::ArrayXd> ParamVector::segment(const std::string& name) {
  const Segment& s = segment_info(name);
  return {values_.data() + s.offset, s.size()};
}

Eigen::Map<const Eigen::ArrayXd> ParamVector::segment(
    const std::string& name) const {
  const Segment& s = segment_info(name);
  return {values_.data() + s.offset, s.size()};
}

bool ParamVector::same_layout(const ParamVector& other) const {
  if (segments_.size() != other.segments_.size()) return false;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const Segment &a = segments_[i], &b = other.segments_[i];
    if (a.name != b.name || a.rows != b.rows || a.cols != b.cols ||
        a.offset != b.offset)
      return false;
  }
  return true;
}

ParamVector ParamVector::zeros_like() const {
  ParamVector out = *this;
  out.set_zero();
  return out;
}

void ParamVector::save(std::ostream& os) const {
  os << "paramvec v1\n";
  os << "segments " << segments_.size() << "\n";
  for (const Segment& s : segments_)
    os << s.name << " " << s.rows << " " << s.cols << "\n";
  os << "values " << values_.size() << "\n";
  char buf[64];
  for (Eigen::Index i = 0; i < values_.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g\n", values_[i]);
    os << buf;
  }
  os << "end\n";
}

void ParamVector::save_file(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("paramvec: cannot write " + path);
  save(f);
}

ParamVector ParamVector::load(std::istream& is) {
  std::string tok, ver;
  is >> tok >> ver;
  if (!is || tok != "paramvec" || ver != "v1")
    throw std::runtime_error("paramvec: bad header");
  std::size_t nseg = 0;
  is >> tok >> nseg;
  if (!is || tok != "segments")
    throw std::runtime_error("paramvec: bad segment table");
  ParamVector pv;
  for (std::size_t i = 0; i < nseg; ++i) {
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    is >> name >> rows >> cols;
    if (!is) throw std::runtime_error("paramvec: truncated segment table");
    pv.add(name, rows, cols);
  }
  Eigen::Index total = 0;
  is >> tok >> total;
  if (!is || tok != "values" || total != pv.size())
    throw std::runtime_error("paramvec: value count does not match segments");
  for (Eigen::Index i = 0; i < total; ++i) {
    is >> pv.values_[i];
    if (!is) throw std::runtime_error("paramvec: truncated values");
  }
  is >> tok;
  if (!is || tok != "end") throw std::runtime_error("paramvec: missing end");
  return pv;
}

ParamVector ParamVector::load_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("paramvec: cannot read " + path);
  return load(f);
}

}  // namespace shapecm::ad

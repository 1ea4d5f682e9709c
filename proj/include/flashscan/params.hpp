#pragma once

#include "flashscan/autodiff.hpp"

#include <span>
#include <string>
#include <vector>

namespace flashscan {

// Flat parameter vector partitioned into named groups. All trainable state
// (grid values, SH coefficients, beta, k, ...) lives here; fields hold layout
// descriptors and read through the store, which keeps finite-difference checks
// and serialization trivial.
class ParamStore {
  public:
    struct Group {
        std::string name;
        uint32_t offset = 0;
        uint32_t size = 0;
        bool trainable = true;
    };

    int add_group(const std::string& name, uint32_t n, bool trainable = true) {
        if (find_group(name) >= 0) throw InvariantError("parameter group already exists: " + name);
        Group g{name, uint32_t(values_.size()), n, trainable};
        groups_.push_back(g);
        values_.resize(values_.size() + n, 0.0);
        return int(groups_.size()) - 1;
    }

    int find_group(const std::string& name) const {
        for (size_t i = 0; i < groups_.size(); ++i)
            if (groups_[i].name == name) return int(i);
        return -1;
    }

    const Group& group(int gid) const { return groups_.at(size_t(gid)); }
    size_t group_count() const { return groups_.size(); }

    void set_trainable(int gid, bool trainable) { groups_.at(size_t(gid)).trainable = trainable; }

    std::span<double> group_values(int gid) {
        const Group& g = group(gid);
        return {values_.data() + g.offset, g.size};
    }
    std::span<const double> group_values(int gid) const {
        const Group& g = group(gid);
        return {values_.data() + g.offset, g.size};
    }

    // Group owning a flat parameter id; groups are contiguous and ordered.
    int group_of(uint32_t pid) const {
        for (size_t i = 0; i < groups_.size(); ++i)
            if (pid < groups_[i].offset + groups_[i].size) return int(i);
        throw InvariantError("parameter id out of range");
    }

    double& at(uint32_t pid) { return values_[pid]; }
    double at(uint32_t pid) const { return values_[pid]; }

    uint32_t size() const { return uint32_t(values_.size()); }

    Ad ad(uint32_t pid, Tape& tape) const { return Ad::param(values_[pid], pid, tape); }

    std::span<const double> raw() const { return values_; }
    std::span<double> raw() { return values_; }

  private:
    std::vector<double> values_;
    std::vector<Group> groups_;
};

// Reads a parameter as T: plain value for double evaluation, tracked leaf for Ad.
template <class T>
T param_as(const ParamStore& store, uint32_t pid, Tape* tape);

template <>
inline double param_as<double>(const ParamStore& store, uint32_t pid, Tape*) {
    return store.at(pid);
}

template <>
inline Ad param_as<Ad>(const ParamStore& store, uint32_t pid, Tape* tape) {
    return store.ad(pid, *tape);
}

}  // namespace flashscan

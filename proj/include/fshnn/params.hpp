// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fshnn {

// Flat storage for trainable reals with a named, ordered layout. The layout
// order is the save order, so round-trips are identical.
class ParamVector {
public:
    struct Entry {
        std::string name;
        std::size_t offset = 0;
        std::vector<int> shape;
    };

    std::size_t add(const std::string& name, std::vector<int> shape)
    {
        std::size_t count = 1;
        for (int s : shape) count *= static_cast<std::size_t>(s);
        Entry e{name, values_.size(), std::move(shape)};
        entries_.push_back(std::move(e));
        values_.resize(values_.size() + count, 0.0);
        return entries_.back().offset;
    }

    std::span<double> slot(std::size_t index)
    {
        const Entry& e = entries_.at(index);
        return {values_.data() + e.offset, slot_size(index)};
    }

    std::span<const double> slot(std::size_t index) const
    {
        const Entry& e = entries_.at(index);
        return {values_.data() + e.offset, slot_size(index)};
    }

    std::size_t slot_size(std::size_t index) const
    {
        std::size_t count = 1;
        for (int s : entries_.at(index).shape) count *= static_cast<std::size_t>(s);
        return count;
    }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }
    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t size() const { return values_.size(); }

    bool same_layout(const ParamVector& other) const
    {
        if (entries_.size() != other.entries_.size()) return false;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].name != other.entries_[i].name) return false;
            if (entries_[i].offset != other.entries_[i].offset) return false;
            if (entries_[i].shape != other.entries_[i].shape) return false;
        }
        return true;
    }

private:
    std::vector<double> values_;
    std::vector<Entry> entries_;
};

} // namespace fshnn

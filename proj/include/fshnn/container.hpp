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

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fshnn::io {

// Binary array container, magic "FSH1". Little-endian f64 payloads only.
// Layout: magic(4) | u32 record count | records. Each record:
// u8 kind | u32 name length | name bytes | u8 dtype (0 = f64 LE) |
// u32 rank | u64 dims[rank] | payload (8 * prod(dims) bytes).

enum class RecordKind : std::uint8_t { Dataset = 0, Params = 1, Metrics = 2 };

struct Record {
    RecordKind kind = RecordKind::Dataset;
    std::string name;
    std::vector<std::uint64_t> dims;
    std::vector<double> data;

    std::size_t element_count() const
    {
        std::size_t n = 1;
        for (auto d : dims) n *= static_cast<std::size_t>(d);
        return n;
    }
};

struct ContainerError : std::runtime_error {
    enum class Code { BadMagic, Truncated, UnknownDtype, BadRecord, IoFailure };
    ContainerError(Code code_, const std::string& what_)
        : std::runtime_error(what_), code(code_)
    {
    }
    Code code;
};

// Atomic write: temp file in the same directory, then rename.
void write_container(const std::string& path, const std::vector<Record>& records);

std::vector<Record> read_container(const std::string& path);

// Convenience: find a record by name (throws if absent).
const Record& find_record(const std::vector<Record>& records, const std::string& name);
const Record* find_record_opt(const std::vector<Record>& records, const std::string& name);

} // namespace fshnn::io

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

#include "fshnn/container.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>

namespace fshnn::io {

namespace {

static_assert(std::endian::native == std::endian::little,
              "container format assumes a little-endian host");

constexpr char kMagic[4] = {'F', 'S', 'H', '1'};

template <typename T> void put(std::string& buf, T v)
{
    char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    buf.append(bytes, sizeof(T));
}

template <typename T> T take(const std::string& buf, std::size_t& pos)
{
    if (pos + sizeof(T) > buf.size())
        throw ContainerError(ContainerError::Code::Truncated, "container: truncated payload");
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

} // namespace

void write_container(const std::string& path, const std::vector<Record>& records)
{
    std::string buf;
    buf.append(kMagic, 4);
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(records.size()));
    for (const Record& r : records) {
        if (r.data.size() != r.element_count())
            throw ContainerError(ContainerError::Code::BadRecord,
                                 "container: record '" + r.name + "' dims do not match payload");
        put<std::uint8_t>(buf, static_cast<std::uint8_t>(r.kind));
        put<std::uint32_t>(buf, static_cast<std::uint32_t>(r.name.size()));
        buf.append(r.name);
        put<std::uint8_t>(buf, 0); // dtype f64 little-endian
        put<std::uint32_t>(buf, static_cast<std::uint32_t>(r.dims.size()));
        for (auto d : r.dims) put<std::uint64_t>(buf, d);
        const std::size_t bytes = r.data.size() * sizeof(double);
        const std::size_t at = buf.size();
        buf.resize(at + bytes);
        std::memcpy(buf.data() + at, r.data.data(), bytes);
    }

    const std::string tmp = path + ".tmp";
    std::FILE* f = std::fopen(tmp.c_str(), "wb");
    if (!f)
        throw ContainerError(ContainerError::Code::IoFailure, "container: cannot open " + tmp);
    const std::size_t written = std::fwrite(buf.data(), 1, buf.size(), f);
    const int closed = std::fclose(f);
    if (written != buf.size() || closed != 0) {
        std::remove(tmp.c_str());
        throw ContainerError(ContainerError::Code::IoFailure, "container: short write to " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::remove(tmp.c_str());
        throw ContainerError(ContainerError::Code::IoFailure,
                             "container: rename failed: " + ec.message());
    }
}

std::vector<Record> read_container(const std::string& path)
{
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f)
        throw ContainerError(ContainerError::Code::IoFailure, "container: cannot open " + path);
    std::string buf;
    char chunk[1 << 16];
    std::size_t n = 0;
    while ((n = std::fread(chunk, 1, sizeof(chunk), f)) > 0) buf.append(chunk, n);
    std::fclose(f);

    if (buf.size() < 8 || std::memcmp(buf.data(), kMagic, 4) != 0)
        throw ContainerError(ContainerError::Code::BadMagic, "container: bad magic in " + path);

    std::size_t pos = 4;
    const auto count = take<std::uint32_t>(buf, pos);
    std::vector<Record> records;
    records.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Record r;
        const auto kind = take<std::uint8_t>(buf, pos);
        if (kind > 2)
            throw ContainerError(ContainerError::Code::BadRecord,
                                 "container: unknown record kind " + std::to_string(kind));
        r.kind = static_cast<RecordKind>(kind);
        const auto name_len = take<std::uint32_t>(buf, pos);
        if (pos + name_len > buf.size())
            throw ContainerError(ContainerError::Code::Truncated, "container: truncated name");
        r.name.assign(buf.data() + pos, name_len);
        pos += name_len;
        const auto dtype = take<std::uint8_t>(buf, pos);
        if (dtype != 0)
            throw ContainerError(ContainerError::Code::UnknownDtype,
                                 "container: unknown dtype code " + std::to_string(dtype));
        const auto rank = take<std::uint32_t>(buf, pos);
        r.dims.resize(rank);
        for (auto& d : r.dims) d = take<std::uint64_t>(buf, pos);
        const std::size_t elems = r.element_count();
        if (pos + elems * sizeof(double) > buf.size())
            throw ContainerError(ContainerError::Code::Truncated,
                                 "container: truncated payload in record '" + r.name + "'");
        r.data.resize(elems);
        std::memcpy(r.data.data(), buf.data() + pos, elems * sizeof(double));
        pos += elems * sizeof(double);
        records.push_back(std::move(r));
    }
    return records;
}

const Record& find_record(const std::vector<Record>& records, const std::string& name)
{
    for (const Record& r : records)
        if (r.name == name) return r;
    throw ContainerError(ContainerError::Code::BadRecord, "container: no record named '" + name + "'");
}

const Record* find_record_opt(const std::vector<Record>& records, const std::string& name)
{
    for (const Record& r : records)
        if (r.name == name) return &r;
    return nullptr;
}

} // namespace fshnn::io

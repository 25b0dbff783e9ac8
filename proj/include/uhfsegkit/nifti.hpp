#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "uhfsegkit/voxel_grid.hpp"

namespace uhfseg {

struct NiftiError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace nifti_detail {

// NIfTI-1, 348-byte header (little-endian assumed, which covers every
// platform this targets).
#pragma pack(push, 1)
struct Header {
    std::int32_t sizeof_hdr;
    char data_type[10];
    char db_name[18];
    std::int32_t extents;
    std::int16_t session_error;
    char regular;
    char dim_info;
    std::int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    std::int16_t intent_code;
    std::int16_t datatype;
    std::int16_t bitpix;
    std::int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    std::int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    std::int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    std::int16_t qform_code;
    std::int16_t sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4];
    float srow_y[4];
    float srow_z[4];
    char intent_name[16];
    char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Header) == 348, "NIfTI-1 header must be 348 bytes");

constexpr std::int16_t DT_UINT8 = 2;
constexpr std::int16_t DT_INT16 = 4;
constexpr std::int16_t DT_INT32 = 8;
constexpr std::int16_t DT_FLOAT32 = 16;
constexpr std::int16_t DT_FLOAT64 = 64;
constexpr std::int16_t DT_UINT16 = 512;
constexpr std::int16_t DT_UINT32 = 768;

inline std::int16_t code_of(DataType dt) {
    switch (dt) {
        case DataType::UInt8: return DT_UINT8;
        case DataType::UInt16: return DT_UINT16;
        case DataType::UInt32: return DT_UINT32;
        case DataType::Int16: return DT_INT16;
        case DataType::Int32: return DT_INT32;
        case DataType::Float32: return DT_FLOAT32;
        case DataType::Float64: return DT_FLOAT64;
    }
    throw NiftiError("unsupported datatype");
}

inline int bytes_per_voxel(std::int16_t code) {
    switch (code) {
        case DT_UINT8: return 1;
        case DT_INT16:
        case DT_UINT16: return 2;
        case DT_INT32:
        case DT_UINT32:
        case DT_FLOAT32: return 4;
        case DT_FLOAT64: return 8;
        default: return 0;
    }
}

inline std::vector<std::uint8_t> read_all(const std::string& path) {
    // gzip files start with 1f 8b; plain files are read as-is.
    std::ifstream f(path, std::ios::binary);
    if (!f) throw NiftiError("cannot open file: " + path);
    std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
    if (raw.size() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b) {
        std::vector<std::uint8_t> out;
        out.reserve(raw.size() * 4);
        z_stream zs{};
        if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw NiftiError("inflateInit failed");
        zs.next_in = raw.data();
        zs.avail_in = static_cast<uInt>(raw.size());
        std::uint8_t buf[1 << 16];
        int ret = Z_OK;
        do {
            zs.next_out = buf;
            zs.avail_out = sizeof(buf);
            ret = inflate(&zs, Z_NO_FLUSH);
            if (ret != Z_OK && ret != Z_STREAM_END) {
                inflateEnd(&zs);
                throw NiftiError("truncated or corrupt gzip payload: " + path);
            }
            out.insert(out.end(), buf, buf + sizeof(buf) - zs.avail_out);
        } while (ret != Z_STREAM_END);
        inflateEnd(&zs);
        return out;
    }
    return raw;
}

inline void write_all(const std::string& path, const std::vector<std::uint8_t>& bytes,
                      bool compress) {
    if (compress) {
        z_stream zs{};
        // Fixed settings; mtime defaults to zero so output bytes are
        // reproducible run to run.
        if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 16 + MAX_WBITS, 8,
                         Z_DEFAULT_STRATEGY) != Z_OK)
            throw NiftiError("deflateInit failed");
        std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(bytes.size())) + 32);
        zs.next_in = const_cast<std::uint8_t*>(bytes.data());
        zs.avail_in = static_cast<uInt>(bytes.size());
        zs.next_out = out.data();
        zs.avail_out = static_cast<uInt>(out.size());
        if (deflate(&zs, Z_FINISH) != Z_STREAM_END) {
            deflateEnd(&zs);
            throw NiftiError("deflate failed");
        }
        out.resize(zs.total_out);
        deflateEnd(&zs);
        std::ofstream f(path, std::ios::binary);
        if (!f) throw NiftiError("cannot write file: " + path);
        f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
        if (!f) throw NiftiError("I/O failure writing " + path);
    } else {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw NiftiError("cannot write file: " + path);
        f.write(reinterpret_cast<const char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
        if (!f) throw NiftiError("I/O failure writing " + path);
    }
}

}  // namespace nifti_detail

inline VoxelGrid load_nifti(const std::string& path) {
    using namespace nifti_detail;
    std::vector<std::uint8_t> bytes = read_all(path);
    if (bytes.size() < sizeof(Header)) throw NiftiError("malformed header: file too small");
    Header h;
    std::memcpy(&h, bytes.data(), sizeof(Header));
    if (h.sizeof_hdr == 540) throw NiftiError("NIfTI-2 files are not supported; convert to NIfTI-1");
    if (std::strncmp(h.magic, "n+1", 3) != 0 || h.sizeof_hdr != 348)
        throw NiftiError("malformed header: bad magic or sizeof_hdr");

    int bpv = bytes_per_voxel(h.datatype);
    if (bpv == 0) throw NiftiError("unsupported datatype code " + std::to_string(h.datatype));

    if (h.dim[0] < 1 || h.dim[0] > 7) throw NiftiError("malformed header: dim[0] out of range");
    for (int d = 4; d <= h.dim[0]; ++d)
        if (h.dim[d] > 1)
            throw NiftiError("only 3D volumes supported (non-singleton dim " + std::to_string(d) + ")");
    Index3 dims{h.dim[0] >= 1 ? h.dim[1] : 1, h.dim[0] >= 2 ? h.dim[2] : 1,
                h.dim[0] >= 3 ? h.dim[3] : 1};
    if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
        throw NiftiError("malformed header: non-positive dimension");
    std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];

    std::size_t offset = static_cast<std::size_t>(h.vox_offset);
    if (offset < sizeof(Header)) offset = 352;
    if (bytes.size() < offset + n * bpv) throw NiftiError("truncated payload: " + path);

    Affine affine;
    if (h.sform_code > 0) {
        for (int c = 0; c < 4; ++c) {
            affine(0, c) = h.srow_x[c];
            affine(1, c) = h.srow_y[c];
            affine(2, c) = h.srow_z[c];
        }
    } else if (h.qform_code > 0) {
        double b = h.quatern_b, c = h.quatern_c, d = h.quatern_d;
        double a2 = 1.0 - (b * b + c * c + d * d);
        double a = a2 > 0 ? std::sqrt(a2) : 0.0;
        double qfac = h.pixdim[0] < 0 ? -1.0 : 1.0;
        double R[3][3] = {
            {a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)},
            {2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)},
            {2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c}};
        for (int r = 0; r < 3; ++r)
            for (int col = 0; col < 3; ++col)
                affine(r, col) = R[r][col] * h.pixdim[col + 1] * (col == 2 ? qfac : 1.0);
        affine(0, 3) = h.qoffset_x;
        affine(1, 3) = h.qoffset_y;
        affine(2, 3) = h.qoffset_z;
    } else {
        affine = Affine::diagonal({h.pixdim[1] > 0 ? h.pixdim[1] : 1.0,
                                   h.pixdim[2] > 0 ? h.pixdim[2] : 1.0,
                                   h.pixdim[3] > 0 ? h.pixdim[3] : 1.0});
    }

    std::vector<double> data(n);
    const std::uint8_t* p = bytes.data() + offset;
    auto decode = [&](auto tag) {
        using T = decltype(tag);
        for (std::size_t i = 0; i < n; ++i) {
            T v;
            std::memcpy(&v, p + i * sizeof(T), sizeof(T));
            data[i] = static_cast<double>(v);
        }
    };
    DataType dtype;
    switch (h.datatype) {
        case DT_UINT8: decode(std::uint8_t{}); dtype = DataType::UInt8; break;
        case DT_INT16: decode(std::int16_t{}); dtype = DataType::Int16; break;
        case DT_INT32: decode(std::int32_t{}); dtype = DataType::Int32; break;
        case DT_UINT16: decode(std::uint16_t{}); dtype = DataType::UInt16; break;
        case DT_UINT32: decode(std::uint32_t{}); dtype = DataType::UInt32; break;
        case DT_FLOAT32: decode(float{}); dtype = DataType::Float32; break;
        case DT_FLOAT64: decode(double{}); dtype = DataType::Float64; break;
        default: throw NiftiError("unsupported datatype");
    }

    // Value scaling: applied when slope is nonzero and not the identity pair.
    if (h.scl_slope != 0.0f && !(h.scl_slope == 1.0f && h.scl_inter == 0.0f)) {
        for (double& v : data) v = v * h.scl_slope + h.scl_inter;
        dtype = DataType::Float64;
    }

    return VoxelGrid(dims, affine, dtype, std::move(data));
}

inline void save_nifti(const VoxelGrid& grid, const std::string& path, bool compress = false) {
    using namespace nifti_detail;
    Header h{};
    h.sizeof_hdr = 348;
    h.regular = 'r';
    h.dim[0] = 3;
    h.dim[1] = static_cast<std::int16_t>(grid.dims()[0]);
    h.dim[2] = static_cast<std::int16_t>(grid.dims()[1]);
    h.dim[3] = static_cast<std::int16_t>(grid.dims()[2]);
    for (int d = 4; d < 8; ++d) h.dim[d] = 1;
    h.datatype = code_of(grid.dtype());
    h.bitpix = static_cast<std::int16_t>(bytes_per_voxel(h.datatype) * 8);
    Vec3 sp = grid.spacing();
    h.pixdim[0] = 1.0f;
    for (int i = 0; i < 3; ++i) h.pixdim[i + 1] = static_cast<float>(sp[i]);
    h.vox_offset = 352.0f;
    h.scl_slope = 1.0f;
    h.scl_inter = 0.0f;
    h.xyzt_units = 2;  // NIFTI_UNITS_MM
    h.sform_code = 1;
    h.qform_code = 0;
    const Affine& a = grid.affine();
    for (int c = 0; c < 4; ++c) {
        h.srow_x[c] = static_cast<float>(a(0, c));
        h.srow_y[c] = static_cast<float>(a(1, c));
        h.srow_z[c] = static_cast<float>(a(2, c));
    }
    std::memcpy(h.magic, "n+1", 4);

    int bpv = bytes_per_voxel(h.datatype);
    std::size_t n = grid.size();
    std::vector<std::uint8_t> bytes(352 + n * bpv, 0);
    std::memcpy(bytes.data(), &h, sizeof(Header));
    std::uint8_t* p = bytes.data() + 352;
    auto encode = [&](auto tag) {
        using T = decltype(tag);
        for (std::size_t i = 0; i < n; ++i) {
            T v = static_cast<T>(grid.data()[i]);
            std::memcpy(p + i * sizeof(T), &v, sizeof(T));
        }
    };
    switch (grid.dtype()) {
        case DataType::UInt8: encode(std::uint8_t{}); break;
        case DataType::UInt16: encode(std::uint16_t{}); break;
        case DataType::UInt32: encode(std::uint32_t{}); break;
        case DataType::Int16: encode(std::int16_t{}); break;
        case DataType::Int32: encode(std::int32_t{}); break;
        case DataType::Float32: encode(float{}); break;
        case DataType::Float64: encode(double{}); break;
    }
    bool gz = compress || (path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0);
    write_all(path, bytes, gz);
}

// Smallest integer type able to hold all values of a label grid.
inline DataType label_storage_type(double max_label) {
    if (max_label < 256) return DataType::UInt8;
    if (max_label < 65536) return DataType::UInt16;
    return DataType::UInt32;
}

}  // namespace uhfseg

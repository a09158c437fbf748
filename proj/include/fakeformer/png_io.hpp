/*
 * Copyright 2026 The FakeFormer Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Minimal PNG codec over zlib.  Writes 8-bit grayscale or RGB with filter
// type 0; reads non-interlaced 8-bit grayscale / RGB / RGBA (alpha dropped)
// with all five scanline filters.

#include <zlib.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "fakeformer/error.hpp"
#include "fakeformer/image.hpp"

namespace ff {

namespace detail {

inline void put_u32_be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

inline uint32_t get_u32_be(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

inline void png_chunk(std::vector<uint8_t>& out, const char type[5], const std::vector<uint8_t>& body) {
    put_u32_be(out, static_cast<uint32_t>(body.size()));
    const size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), body.begin(), body.end());
    const uint32_t crc = static_cast<uint32_t>(
        ::crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start)));
    put_u32_be(out, crc);
}

inline int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace detail

inline void write_png(const std::string& path, const Image& im) {
    if (im.channels != 1 && im.channels != 3)
        throw FormatError("png write: only grayscale or RGB supported");
    const int64_t h = im.height, w = im.width, ch = im.channels;
    std::vector<uint8_t> raw(static_cast<size_t>(h * (w * ch + 1)));
    size_t pos = 0;
    for (int64_t y = 0; y < h; ++y) {
        raw[pos++] = 0;  // filter: none
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < ch; ++c) {
                const double v = std::min(1.0, std::max(0.0, im.at(y, x, c)));
                raw[pos++] = static_cast<uint8_t>(std::lround(v * 255.0));
            }
    }
    uLongf comp_len = ::compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> comp(comp_len);
    if (::compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw FormatError("png write: deflate failed");
    comp.resize(comp_len);

    std::vector<uint8_t> out;
    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.insert(out.end(), sig, sig + 8);
    std::vector<uint8_t> ihdr;
    detail::put_u32_be(ihdr, static_cast<uint32_t>(w));
    detail::put_u32_be(ihdr, static_cast<uint32_t>(h));
    ihdr.push_back(8);                              // bit depth
    ihdr.push_back(ch == 1 ? 0 : 2);                // color type
    ihdr.push_back(0);                              // compression
    ihdr.push_back(0);                              // filter method
    ihdr.push_back(0);                              // no interlace
    detail::png_chunk(out, "IHDR", ihdr);
    detail::png_chunk(out, "IDAT", comp);
    detail::png_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("png write: cannot open " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw FormatError("png write: short write to " + path);
}

inline Image read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("png read: cannot open " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    auto fail = [&](const std::string& what, size_t offset) {
        throw FormatError("png read: " + what + " at byte " + std::to_string(offset) + " of " + path);
    };

    static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (buf.size() < 8 || std::memcmp(buf.data(), sig, 8) != 0) fail("bad signature", 0);

    size_t pos = 8;
    int64_t w = 0, h = 0;
    int color_type = -1;
    int64_t src_ch = 0;
    std::vector<uint8_t> idat;
    bool seen_end = false;
    while (pos + 8 <= buf.size() && !seen_end) {
        const uint32_t len = detail::get_u32_be(buf.data() + pos);
        if (pos + 12 + len > buf.size()) fail("truncated chunk", pos);
        const char* type = reinterpret_cast<const char*>(buf.data() + pos + 4);
        const uint8_t* body = buf.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) fail("bad IHDR length", pos);
            w = detail::get_u32_be(body);
            h = detail::get_u32_be(body + 4);
            const int bit_depth = body[8];
            color_type = body[9];
            if (bit_depth != 8) fail("unsupported bit depth " + std::to_string(bit_depth), pos);
            if (color_type == 0)
                src_ch = 1;
            else if (color_type == 2)
                src_ch = 3;
            else if (color_type == 6)
                src_ch = 4;
            else
                fail("unsupported color type " + std::to_string(color_type), pos);
            if (body[12] != 0) fail("interlaced images unsupported", pos);
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), body, body + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            seen_end = true;
        }
        pos += 12 + len;
    }
    if (w <= 0 || h <= 0) fail("missing IHDR", pos);
    if (idat.empty()) fail("missing IDAT", pos);

    const int64_t stride = w * src_ch;
    std::vector<uint8_t> raw(static_cast<size_t>(h * (stride + 1)));
    uLongf raw_len = static_cast<uLongf>(raw.size());
    const int zrc = ::uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size()));
    if (zrc != Z_OK || raw_len != raw.size()) fail("inflate failed", 8);

    // Undo per-scanline filters in place.
    std::vector<uint8_t> prev(static_cast<size_t>(stride), 0);
    std::vector<uint8_t> line(static_cast<size_t>(stride));
    const int64_t out_ch = src_ch == 4 ? 3 : src_ch;
    Image im = Image::make(h, w, out_ch);
    for (int64_t y = 0; y < h; ++y) {
        const uint8_t* src = raw.data() + y * (stride + 1);
        const uint8_t filter = src[0];
        const uint8_t* data = src + 1;
        for (int64_t i = 0; i < stride; ++i) {
            const int left = i >= src_ch ? line[i - src_ch] : 0;
            const int up = prev[i];
            const int ul = i >= src_ch ? prev[i - src_ch] : 0;
            int v = data[i];
            switch (filter) {
                case 0: break;
                case 1: v += left; break;
                case 2: v += up; break;
                case 3: v += (left + up) / 2; break;
                case 4: v += detail::paeth(left, up, ul); break;
                default: fail("bad filter type " + std::to_string(filter), static_cast<size_t>(y));
            }
            line[i] = static_cast<uint8_t>(v & 0xff);
        }
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < out_ch; ++c)
                im.at(y, x, c) = static_cast<double>(line[x * src_ch + c]) / 255.0;
        prev = line;
    }
    return im;
}

}  // namespace ff

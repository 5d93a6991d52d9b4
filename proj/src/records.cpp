#include "mpirecon/records.hpp"

#include <tuple>

namespace mpirecon {

LineCounts& LineCounts::operator+=(const LineCounts& other)
{
    openmp += other.openmp;
    openacc += other.openacc;
    cuda += other.cuda;
    opencl += other.opencl;
    c += other.c;
    cpp += other.cpp;
    fortran += other.fortran;
    total += other.total;
    return *this;
}

bool call_site_less(const CallSite& a, const CallSite& b)
{
    return std::tie(a.repo_id, a.filename, a.line_number, a.column, a.collective) <
           std::tie(b.repo_id, b.filename, b.line_number, b.column, b.collective);
}

} // namespace mpirecon

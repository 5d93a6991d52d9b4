#include "mpirecon/pipeline.hpp"

int main(int argc, char** argv)
{
    return mpirecon::cli::run(argc, argv);
}

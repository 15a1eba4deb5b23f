#include "app.hpp"

int main(int argc, char** argv) { return acdc::cli::run_app(argc, argv); }

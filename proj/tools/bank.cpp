#include "bank/app.hpp"

int main(int argc, char** argv) { return bank::app::run(argc, argv); }

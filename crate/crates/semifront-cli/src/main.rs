fn main() {
    // Command dispatch is filled in alongside the library modules.
}

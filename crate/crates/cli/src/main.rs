fn main() {
    eprintln!("tessera: not yet wired up");
    std::process::exit(2);
}

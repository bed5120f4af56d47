fn main() -> anyhow::Result<()> {
    chaosflock::cli::run()
}

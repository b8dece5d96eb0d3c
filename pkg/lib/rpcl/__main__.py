from rpcl.cli import main

main()

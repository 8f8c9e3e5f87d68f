from moxi.cli import main

raise SystemExit(main())

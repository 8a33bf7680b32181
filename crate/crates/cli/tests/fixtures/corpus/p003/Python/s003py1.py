# max solution 1
n, y = map(int, input().split())
print(max(n, y))
